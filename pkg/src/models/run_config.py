"""Configurazione di un run: default → preset → file chiave=valore → flag CLI → NHDP_SEED."""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

from dotenv.parser import parse_stream

from src.utils.config import (
    ALPHA_PRIOR,
    ATOM_UPDATES,
    DEFAULT_ALPHA,
    DEFAULT_BURNIN,
    DEFAULT_CHAINS,
    DEFAULT_GAMMA,
    DEFAULT_H_JITTER,
    DEFAULT_H_MEAN,
    DEFAULT_H_OMEGA,
    DEFAULT_H_SIGMA2,
    DEFAULT_H_VARIANT,
    DEFAULT_INIT,
    DEFAULT_INIT_K,
    DEFAULT_LOG_EVERY,
    DEFAULT_SAMPLER,
    DEFAULT_SEED,
    DEFAULT_SIGMA_EPS2,
    DEFAULT_SWEEPS,
    DEFAULT_TRACE_THIN,
    GAMMA_PRIOR,
    H_VARIANTS,
    KERNEL_OMEGA_PRIOR,
    KERNEL_SIGMA2_PRIOR,
    OUTPUT_DIR,
    PRESETS,
    SAMPLERS,
    SEED_ENV_VAR,
    SIGMA_EPS_PRIOR,
)
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)


def _parse_bool(raw: Any) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("true", "1", "yes", "on"):
        return True
    if text in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"booleano non valido: {raw!r}")


def _parse_floats(raw: Any) -> List[float]:
    if isinstance(raw, (list, tuple)):
        return [float(x) for x in raw]
    parts = str(raw).replace(",", " ").split()
    return [float(x) for x in parts]


def _parse_pair(raw: Any) -> Tuple[float, float]:
    values = _parse_floats(raw)
    if len(values) != 2:
        raise ValueError(f"attesi due numeri, trovati {len(values)}")
    return values[0], values[1]


def _parse_optional_path(raw: Any) -> Optional[str]:
    text = str(raw).strip() if raw is not None else ""
    return text or None


# chiave del file di configurazione → (campo di RunConfig, parser)
CONFIG_KEYS: Dict[str, Tuple[str, Callable[[Any], Any]]] = {
    "sampler": ("sampler", str),
    "seed": ("seed", int),
    "chains": ("chains", int),
    "sweeps": ("sweeps", int),
    "burnin": ("burnin", int),
    "trace.thin": ("trace_thin", int),
    "data.grid": ("data_grid", _parse_optional_path),
    "data.values": ("data_values", _parse_optional_path),
    "out": ("out", str),
    "H.variant": ("h_variant", str),
    "H.mean": ("h_mean", float),
    "H.sigma2": ("h_sigma2", float),
    "H.omega": ("h_omega", float),
    "H.jitter": ("h_jitter", float),
    "H.variances": ("h_variances", _parse_floats),
    "H.atom_update": ("h_atom_update", str),
    "H.resample": ("h_resample", _parse_bool),
    "gamma": ("gamma", float),
    "alpha": ("alpha", float),
    "sigma_eps2": ("sigma_eps2", float),
    "prior.gamma": ("prior_gamma", _parse_pair),
    "prior.alpha": ("prior_alpha", _parse_pair),
    "prior.sigma_eps": ("prior_sigma_eps", _parse_pair),
    "prior.kernel_sigma2": ("prior_kernel_sigma2", _parse_pair),
    "prior.kernel_omega": ("prior_kernel_omega", _parse_pair),
    "resample.gamma": ("resample_gamma", _parse_bool),
    "resample.alpha": ("resample_alpha", _parse_bool),
    "resample.sigma_eps": ("resample_sigma_eps", _parse_bool),
    "alpha.shared": ("alpha_shared", _parse_bool),
    "init": ("init", str),
    "init.k": ("init_k", int),
    "debug.check_counts": ("debug_check_counts", _parse_bool),
    "log.every": ("log_every", int),
}


@dataclass
class RunConfig:
    """
    Parametri di un run di inferenza.

    I nomi dei campi seguono le chiavi del file di configurazione con
    punti sostituiti da underscore (es. `H.omega` → `h_omega`).
    """
    sampler: str = DEFAULT_SAMPLER
    seed: int = DEFAULT_SEED
    chains: int = DEFAULT_CHAINS
    sweeps: int = DEFAULT_SWEEPS
    burnin: int = DEFAULT_BURNIN
    trace_thin: int = DEFAULT_TRACE_THIN
    data_grid: Optional[str] = None
    data_values: Optional[str] = None
    out: str = OUTPUT_DIR
    h_variant: str = DEFAULT_H_VARIANT
    h_mean: float = DEFAULT_H_MEAN
    h_sigma2: float = DEFAULT_H_SIGMA2
    h_omega: float = DEFAULT_H_OMEGA
    h_jitter: float = DEFAULT_H_JITTER
    h_variances: Optional[List[float]] = None
    h_atom_update: str = "joint"
    h_resample: bool = False
    gamma: float = DEFAULT_GAMMA
    alpha: float = DEFAULT_ALPHA
    sigma_eps2: float = DEFAULT_SIGMA_EPS2
    prior_gamma: Tuple[float, float] = GAMMA_PRIOR
    prior_alpha: Tuple[float, float] = ALPHA_PRIOR
    prior_sigma_eps: Tuple[float, float] = SIGMA_EPS_PRIOR
    prior_kernel_sigma2: Tuple[float, float] = KERNEL_SIGMA2_PRIOR
    prior_kernel_omega: Tuple[float, float] = KERNEL_OMEGA_PRIOR
    resample_gamma: bool = True
    resample_alpha: bool = True
    resample_sigma_eps: bool = True
    alpha_shared: bool = True
    init: str = DEFAULT_INIT
    init_k: int = DEFAULT_INIT_K
    debug_check_counts: bool = False
    log_every: int = DEFAULT_LOG_EVERY

    def set(self, key: str, raw: Any):
        """
        Imposta una chiave del file di configurazione.

        Raises:
            ConfigError: Se la chiave è sconosciuta o il valore non è parsabile
        """
        if key not in CONFIG_KEYS:
            raise ConfigError(f"Chiave di configurazione sconosciuta: '{key}'")
        field_name, parser = CONFIG_KEYS[key]
        try:
            value = parser(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Valore non valido per '{key}': {raw!r} ({e})") from e
        setattr(self, field_name, value)

    def apply(self, values: Dict[str, Any]):
        for key, raw in values.items():
            self.set(key, raw)

    def apply_preset(self, name: str):
        if name not in PRESETS:
            raise ConfigError(f"Preset sconosciuto: '{name}' (disponibili: {sorted(PRESETS)})")
        self.apply(PRESETS[name])
        logger.info(f"Preset '{name}' applicato")

    def apply_file(self, path: str):
        """
        Legge un file `chiave = valore` con il parser di python-dotenv
        (commenti `#`, valori tra virgolette, chiavi puntate come `H.omega`).

        Raises:
            ConfigError: Se il file manca, una riga non è interpretabile o una chiave è senza valore
        """
        if not os.path.exists(path):
            raise ConfigError(f"File di configurazione {path} non trovato")
        with open(path, "r", encoding="utf-8") as f:
            for binding in parse_stream(f):
                line = binding.original.line
                if binding.error:
                    raise ConfigError(f"{path}:{line}: riga non interpretabile: {binding.original.string.strip()!r}")
                if binding.key is None:
                    continue
                if binding.value is None:
                    raise ConfigError(f"{path}:{line}: chiave '{binding.key}' senza valore")
                self.set(binding.key, binding.value)
        logger.info(f"Configurazione letta da {path}")

    def apply_env(self):
        raw = os.getenv(SEED_ENV_VAR)
        if raw:
            self.set("seed", raw)
            logger.info(f"Seed sovrascritto da {SEED_ENV_VAR}={self.seed}")

    @classmethod
    def load(cls, preset: Optional[str] = None, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """
        Costruisce la configurazione applicando le sorgenti in ordine di precedenza crescente.

        Args:
            preset: Nome del preset (paperA, paperB, twogroup)
            config_path: File chiave=valore
            overrides: Chiavi impostate da flag CLI (i valori None sono ignorati)

        Returns:
            RunConfig validato
        """
        cfg = cls()
        if preset:
            cfg.apply_preset(preset)
        if config_path:
            cfg.apply_file(config_path)
        if overrides:
            cfg.apply({k: v for k, v in overrides.items() if v is not None})
        cfg.apply_env()
        cfg.validate()
        return cfg

    def validate(self):
        """
        Raises:
            ConfigError: Se un valore è fuori dal dominio documentato o un path non esiste
        """
        def fail(key: str, msg: str):
            raise ConfigError(f"'{key}': {msg}")

        if self.sampler not in SAMPLERS:
            fail("sampler", f"atteso uno tra {SAMPLERS}, trovato {self.sampler!r}")
        if self.h_variant not in H_VARIANTS:
            fail("H.variant", f"atteso uno tra {H_VARIANTS}, trovato {self.h_variant!r}")
        if self.h_atom_update not in ATOM_UPDATES:
            fail("H.atom_update", f"atteso uno tra {ATOM_UPDATES}, trovato {self.h_atom_update!r}")
        if self.init not in ("single", "random"):
            fail("init", f"atteso single o random, trovato {self.init!r}")
        for key, value in (("chains", self.chains), ("sweeps", self.sweeps), ("trace.thin", self.trace_thin), ("init.k", self.init_k)):
            if value < 1:
                fail(key, f"deve essere >= 1, trovato {value}")
        if not 0 <= self.burnin < self.sweeps:
            fail("burnin", f"deve essere in [0, sweeps), trovato {self.burnin} con sweeps={self.sweeps}")
        if self.log_every < 0:
            fail("log.every", f"deve essere >= 0, trovato {self.log_every}")
        for key, value in (("H.sigma2", self.h_sigma2), ("H.omega", self.h_omega), ("H.jitter", self.h_jitter),
                           ("gamma", self.gamma), ("alpha", self.alpha), ("sigma_eps2", self.sigma_eps2)):
            if not value > 0:
                fail(key, f"deve essere positivo, trovato {value!r}")
        for key, pair in (("prior.gamma", self.prior_gamma), ("prior.alpha", self.prior_alpha), ("prior.sigma_eps", self.prior_sigma_eps),
                          ("prior.kernel_sigma2", self.prior_kernel_sigma2), ("prior.kernel_omega", self.prior_kernel_omega)):
            if not (pair[0] > 0 and pair[1] > 0):
                fail(key, f"parametri devono essere positivi, trovato {pair!r}")
        if self.h_variances is not None and any(not v > 0 for v in self.h_variances):
            fail("H.variances", f"varianze devono essere positive, trovato {self.h_variances!r}")
        if self.h_resample:
            if self.sampler != "conditional":
                fail("H.resample", "supportato solo con sampler=conditional")
            if self.h_variant not in ("gp", "markov-chain"):
                fail("H.resample", f"richiede H.variant gp o markov-chain, trovato {self.h_variant!r}")
        for key, path in (("data.grid", self.data_grid), ("data.values", self.data_values)):
            if path is not None and not os.path.exists(path):
                fail(key, f"path {path} non trovato")

    def to_dict(self) -> Dict[str, Any]:
        """Configurazione serializzabile con le chiavi del file."""
        by_field = asdict(self)
        out = {}
        for key, (field_name, _) in CONFIG_KEYS.items():
            value = by_field[field_name]
            out[key] = list(value) if isinstance(value, tuple) else value
        return out

    def config_hash(self) -> str:
        """SHA-256 della configurazione canonica (seed escluso)."""
        payload = {k: v for k, v in self.to_dict().items() if k not in ("seed", "out")}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "RunConfig":
        cfg = cls()
        cfg.apply({k: v for k, v in values.items() if v is not None})
        return cfg


