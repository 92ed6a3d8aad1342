"""Utility di stick-breaking e campionamento Dirichlet in log-spazio."""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from src.utils.errors import ParameterError

STICK_TOLERANCE = 1e-12
TINY = np.finfo(float).tiny


@dataclass
class StickWeights:
    """
    Pesi β_1..β_K più il resto β_new.

    Attributes:
        weights: Array (K,) dei pesi delle componenti
        remainder: Massa residua β_new
    """
    weights: np.ndarray
    remainder: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.remainder = float(self.remainder)
        if np.any(self.weights < 0) or self.remainder < 0:
            raise ParameterError("Pesi di stick-breaking negativi")
        total = self.weights.sum() + self.remainder
        if abs(total - 1.0) > STICK_TOLERANCE * max(1, len(self.weights)):
            raise ParameterError(f"I pesi di stick-breaking sommano a {total!r}, atteso 1")

    @property
    def K(self) -> int:
        return len(self.weights)

    def as_vector(self) -> np.ndarray:
        """Vettore (K+1,) con β_new in ultima posizione."""
        return np.append(self.weights, self.remainder)

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "StickWeights":
        vector = np.asarray(vector, dtype=float)
        if vector.size == 0:
            raise ParameterError("Vettore dei pesi vuoto: serve almeno β_new")
        return cls(weights=vector[:-1], remainder=vector[-1])


def log_dirichlet(params: np.ndarray, rng: np.random.Generator, size: Optional[Union[int, Tuple[int, ...]]] = None) -> np.ndarray:
    """
    Estrae log-pesi da una Dirichlet tramite variabili Gamma in log-spazio.

    Per shape piccoli (es. γ/L con L=1000) le Gamma(a) sottoflussano a zero;
    si usa l'identità Gamma(a) = Gamma(a+1)·U^(1/a) valutata in log.

    Args:
        params: Parametri (..., D) strettamente positivi
        rng: Generatore numpy
        size: Forma batch aggiuntiva anteposta a params.shape

    Returns:
        Log-pesi normalizzati con la stessa forma del batch

    Raises:
        ParameterError: Se un parametro non è positivo
    """
    params = np.asarray(params, dtype=float)
    if params.size == 0:
        raise ParameterError("Dirichlet con zero componenti")
    if np.any(~(params > 0)):
        raise ParameterError(f"Parametri Dirichlet non positivi: min={params.min()!r}")
    shape = params.shape if size is None else tuple(np.atleast_1d(size)) + params.shape
    log_g = np.log(rng.gamma(params + 1.0, size=shape)) + np.log(rng.uniform(size=shape)) / params
    return log_g - logsumexp(log_g, axis=-1, keepdims=True)


def dirichlet_draw(params: np.ndarray, rng: np.random.Generator, size: Optional[Union[int, Tuple[int, ...]]] = None) -> np.ndarray:
    """Estrazione Dirichlet robusta; ogni riga somma a 1."""
    w = np.exp(log_dirichlet(params, rng, size=size))
    return w / w.sum(axis=-1, keepdims=True)


def stick_break(concentration: float, truncation: int, rng: np.random.Generator) -> StickWeights:
    """
    Costruzione GEM troncata: π_k = π'_k ∏_{l<k} (1 − π'_l), π'_l ~ Beta(1, c).

    Args:
        concentration: Concentrazione c > 0
        truncation: Numero di pesi espliciti
        rng: Generatore numpy

    Returns:
        StickWeights con resto pari a ∏_l (1 − π'_l)

    Raises:
        ParameterError: Se la concentrazione non è positiva o la troncatura < 1
    """
    if not concentration > 0:
        raise ParameterError(f"Concentrazione non positiva: {concentration!r}")
    if truncation < 1:
        raise ParameterError(f"Troncatura non valida: {truncation!r}")
    fractions = rng.beta(1.0, concentration, size=truncation)
    leftover = np.cumprod(1.0 - fractions)
    weights = fractions * np.concatenate(([1.0], leftover[:-1]))
    return StickWeights(weights=weights, remainder=leftover[-1])


def sample_pi(beta: StickWeights, alpha_u: float, counts_u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    π_u ~ Dir(α_u β_1 + n_u·1, ..., α_u β_K + n_u·K, α_u β_new).

    Args:
        beta: Pesi globali
        alpha_u: Concentrazione del gruppo u
        counts_u: Array (K,) dei conteggi n_u·k
        rng: Generatore numpy

    Returns:
        Vettore di probabilità (K+1,)
    """
    if not alpha_u > 0:
        raise ParameterError(f"α_u non positivo: {alpha_u!r}")
    counts_u = np.asarray(counts_u, dtype=float)
    if counts_u.shape != (beta.K,):
        raise ParameterError(f"Conteggi di forma {counts_u.shape} per {beta.K} componenti")
    params = np.maximum(alpha_u * beta.as_vector(), TINY)
    params[:-1] += counts_u
    return dirichlet_draw(params, rng)
