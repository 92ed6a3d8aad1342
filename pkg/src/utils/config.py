"""Configurazioni globali per il progetto."""

import logging
import sys
from typing import Dict, Any, Tuple

# Directory
OUTPUT_DIR = ".output"

# File di output
GRID_FILENAME = "grid.csv"
DATA_FILENAME = "data.csv"
TRUTH_FILENAME = "truth.json"
MANIFEST_FILENAME = "run_manifest.json"
FLOAT_FORMAT = "%.17g"

# Ambiente
SEED_ENV_VAR = "NHDP_SEED"

# Sampler
DEFAULT_SAMPLER = "conditional"
SAMPLERS = ["conditional", "marginal"]
DEFAULT_SEED = 0
DEFAULT_CHAINS = 1
DEFAULT_SWEEPS = 1000
DEFAULT_BURNIN = 0
DEFAULT_TRACE_THIN = 1
DEFAULT_LOG_EVERY = 100
DEFAULT_INIT = "single"
DEFAULT_INIT_K = 5

# Base measure H
H_VARIANTS = ["gp", "product", "constant", "markov-chain"]
DEFAULT_H_VARIANT = "gp"
DEFAULT_H_MEAN = 0.0
DEFAULT_H_SIGMA2 = 1.0
DEFAULT_H_OMEGA = 0.01
DEFAULT_H_JITTER = 1e-10
JITTER_MAX_DOUBLINGS = 8
ATOM_UPDATES = ["joint", "gibbs"]

# Iperparametri (Gamma in forma shape/rate, InvGamma shape/scale)
DEFAULT_GAMMA = 1.0
DEFAULT_ALPHA = 1.0
DEFAULT_SIGMA_EPS2 = 0.01
GAMMA_PRIOR: Tuple[float, float] = (5.0, 0.1)
ALPHA_PRIOR: Tuple[float, float] = (20.0, 20.0)
SIGMA_EPS_PRIOR: Tuple[float, float] = (5.0, 1.0)
KERNEL_SIGMA2_PRIOR: Tuple[float, float] = (2.0, 2.0)
KERNEL_OMEGA_PRIOR: Tuple[float, float] = (2.0, 40.0)
KERNEL_MH_STEP = 0.1

# Riassunto della posterior
SUMMARY_BURNIN_FRACTION = 0.5
SUMMARY_THIN = 5
CREDIBLE_QUANTILES = (0.05, 0.95)
ALIGNMENT_MIN_OVERLAP = 0.5

# Oracolo Monte Carlo per i momenti
MC_TRUNCATION = 1000
MC_REPLICATES = 20000
MC_BATCH = 500

# Preset delle analisi (override rispetto ai default)
PRESETS: Dict[str, Dict[str, Any]] = {
    "paperA": {
        "H.variant": "gp",
        "H.mean": 0.0,
        "H.sigma2": 1.0,
        "H.omega": 0.01,
        "prior.gamma": (5.0, 0.1),
        "prior.alpha": (20.0, 20.0),
        "prior.sigma_eps": (5.0, 1.0),
        "alpha.shared": True,
        "sweeps": 5000,
        "burnin": 2500,
    },
    "paperB": {
        "H.variant": "gp",
        "H.mean": 0.0,
        "H.sigma2": 1.0,
        "H.omega": 0.05,
        "prior.gamma": (5.0, 0.1),
        "prior.alpha": (20.0, 20.0),
        "prior.sigma_eps": (5.0, 1.0),
        "alpha.shared": True,
        "sweeps": 5000,
        "burnin": 2500,
    },
    "twogroup": {
        "H.variant": "gp",
        "H.mean": 0.0,
        "H.sigma2": 1.0,
        "H.omega": 0.05,
        "prior.gamma": (5.0, 0.1),
        "alpha": 1.0,
        "resample.alpha": False,
        "prior.sigma_eps": (2.0, 1.0),
        "sweeps": 3000,
        "burnin": 1500,
    },
}


def setup_logging(level: int = logging.INFO) -> logging.Logger:
    """
    Configura il logger principale del progetto.

    Args:
        level: Livello di logging (default: INFO)

    Returns:
        Logger configurato
    """
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        handlers=[
            logging.StreamHandler(sys.stdout)
        ]
    )
    return logging.getLogger(__name__)
