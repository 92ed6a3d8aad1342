"""Pipeline di fit: carica i dati, esegue le catene in parallelo e scrive tracce e manifest."""

import json
import logging
import os
import platform
import shutil
from typing import Any, Dict, List

import joblib
import numpy as np
import pandas as pd
import scipy
from joblib import Parallel, delayed

from src.inference.engines import run_chain
from src.models.dataset import CovariateGrid, GroupedDataset
from src.models.run_config import RunConfig
from src.utils.config import DATA_FILENAME, GRID_FILENAME, MANIFEST_FILENAME
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)


def load_dataset(config: RunConfig) -> GroupedDataset:
    """
    Carica griglia e osservazioni indicate da `data.grid` e `data.values`.

    Raises:
        ConfigError: Se uno dei due path non è configurato
        DataError: Se i file non sono leggibili
    """
    if not config.data_grid or not config.data_values:
        raise ConfigError("'data.grid' e 'data.values' sono obbligatori per il fit")
    grid = CovariateGrid.from_csv(config.data_grid)
    return GroupedDataset.from_csv(config.data_values, grid)


def _copy_input(src: str, dst: str):
    if os.path.abspath(src) != os.path.abspath(dst):
        shutil.copyfile(src, dst)


def chain_seeds(seed: int, chains: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(chains)


def build_manifest(config: RunConfig, seeds: List[np.random.SeedSequence], chains: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Manifest sufficiente a riprodurre il run."""
    return {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "chain_seeds": [{"entropy": int(s.entropy), "spawn_key": list(s.spawn_key)} for s in seeds],
        "chains": [{k: v for k, v in c.items() if k != "trace"} for c in chains],
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "joblib": joblib.__version__,
        },
    }


def run_fit(config: RunConfig) -> Dict[str, Any]:
    """
    Esegue `config.chains` catene indipendenti e scrive nella directory `config.out`:
    una sottodirectory `chain_<c>` per catena, copie di griglia e dati, il manifest.

    Il processo:
    1. Carica griglia e dati
    2. Deriva un seed indipendente per catena da `seed`
    3. Esegue le catene (in parallelo se chains > 1)
    4. Salva il manifest

    Args:
        config: Configurazione validata

    Returns:
        Manifest del run
    """
    data = load_dataset(config)
    out_dir = config.out
    os.makedirs(out_dir, exist_ok=True)
    _copy_input(config.data_grid, os.path.join(out_dir, GRID_FILENAME))
    _copy_input(config.data_values, os.path.join(out_dir, DATA_FILENAME))

    seeds = chain_seeds(config.seed, config.chains)
    logger.info(f"Avvio fit: {config.chains} catene × {config.sweeps} sweep (burn-in {config.burnin}, thin {config.trace_thin}), sampler {config.sampler}")
    if config.chains == 1:
        chains = [run_chain(config, data, 0, seeds[0], out_dir)]
    else:
        n_jobs = min(config.chains, os.cpu_count() or 1)
        chains = Parallel(n_jobs=n_jobs)(delayed(run_chain)(config, data, c, seeds[c], out_dir) for c in range(config.chains))

    manifest = build_manifest(config, seeds, chains)
    manifest_path = os.path.join(out_dir, MANIFEST_FILENAME)
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False)
    logger.info(f"Fit completato. Tracce e manifest salvati in {out_dir}")
    return manifest
