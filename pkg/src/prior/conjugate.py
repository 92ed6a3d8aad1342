"""Calcoli Gaussiani coniugati: posterior degli atomi, predittive ed evidenza in log-spazio."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError, solve_triangular

from src.prior.base_measure import BaseMeasure
from src.utils.errors import NumericalError, ParameterError

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


def _check_sigma(sigma_eps2: float):
    if not sigma_eps2 > 0:
        raise ParameterError(f"σ_ε² deve essere positivo, trovato {sigma_eps2!r}")


@dataclass
class ComponentStats:
    """
    Statistiche sufficienti per componente, aggiornate incrementalmente.

    Attributes:
        counts: Array (K, M) dei conteggi n_u·k
        sums: Array (K, M) delle somme Σ y per slot
        sumsq: Array (K, M) delle somme Σ y² per slot
    """
    counts: np.ndarray
    sums: np.ndarray
    sumsq: np.ndarray

    @classmethod
    def empty(cls, K: int, M: int) -> "ComponentStats":
        return cls(np.zeros((K, M), dtype=int), np.zeros((K, M)), np.zeros((K, M)))

    @classmethod
    def from_assignments(cls, groups: np.ndarray, values: np.ndarray, z: np.ndarray, K: int, M: int) -> "ComponentStats":
        """Statistiche ricalcolate da zero (oracolo per quelle incrementali)."""
        stats = cls.empty(K, M)
        if len(values):
            np.add.at(stats.counts, (z, groups), 1)
            np.add.at(stats.sums, (z, groups), values)
            np.add.at(stats.sumsq, (z, groups), values ** 2)
        return stats

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    def add(self, k: int, u: int, y: float):
        self.counts[k, u] += 1
        self.sums[k, u] += y
        self.sumsq[k, u] += y * y

    def remove(self, k: int, u: int, y: float):
        self.counts[k, u] -= 1
        if self.counts[k, u] == 0:
            self.sums[k, u] = 0.0
            self.sumsq[k, u] = 0.0
        else:
            self.sums[k, u] -= y
            self.sumsq[k, u] -= y * y

    def add_block(self, k: int, u: int, values: np.ndarray):
        self.counts[k, u] += len(values)
        self.sums[k, u] += values.sum()
        self.sumsq[k, u] += (values ** 2).sum()

    def remove_block(self, k: int, u: int, values: np.ndarray):
        self.counts[k, u] -= len(values)
        if self.counts[k, u] == 0:
            self.sums[k, u] = 0.0
            self.sumsq[k, u] = 0.0
        else:
            self.sums[k, u] -= values.sum()
            self.sumsq[k, u] -= (values ** 2).sum()

    def append_component(self) -> int:
        M = self.counts.shape[1]
        self.counts = np.vstack([self.counts, np.zeros((1, M), dtype=int)])
        self.sums = np.vstack([self.sums, np.zeros((1, M))])
        self.sumsq = np.vstack([self.sumsq, np.zeros((1, M))])
        return self.K - 1

    def delete_component(self, k: int):
        self.counts = np.delete(self.counts, k, axis=0)
        self.sums = np.delete(self.sums, k, axis=0)
        self.sumsq = np.delete(self.sumsq, k, axis=0)

    def keep(self, mask: np.ndarray):
        self.counts = self.counts[mask]
        self.sums = self.sums[mask]
        self.sumsq = self.sumsq[mask]


@dataclass
class AtomPosterior:
    """
    Posterior Gaussiana di un atomo globale.

    Attributes:
        latent_mean: Media latente (D,)
        latent_cov: Covarianza latente (D, D)
        latent_chol: Fattore di Cholesky inferiore della precisione latente
        slot_map: Mappa slot → coordinata latente
    """
    latent_mean: np.ndarray
    latent_cov: np.ndarray
    latent_chol: np.ndarray
    slot_map: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        """Media μ̃_k sugli slot (M,)."""
        return self.latent_mean[self.slot_map]

    @property
    def cov(self) -> np.ndarray:
        """Covarianza Σ̃_k sugli slot (M, M)."""
        return self.latent_cov[np.ix_(self.slot_map, self.slot_map)]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Estrazione esatta φ ~ N(μ̃, Σ̃) risolvendo con il Cholesky della precisione."""
        noise = rng.standard_normal(len(self.latent_mean))
        latent = self.latent_mean + solve_triangular(self.latent_chol, noise, lower=True, trans="T")
        return latent[self.slot_map]


def _latent_stats(H: BaseMeasure, counts: np.ndarray, sums: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    D = H.latent_dim
    n_lat = np.bincount(H.slot_map, weights=counts, minlength=D)
    s_lat = np.bincount(H.slot_map, weights=sums, minlength=D)
    return n_lat, s_lat


def _posterior_factor(H: BaseMeasure, n_lat: np.ndarray, s_lat: np.ndarray, sigma_eps2: float) -> Tuple[np.ndarray, np.ndarray]:
    """Cholesky inferiore di Λ = P0 + diag(n)/σ² e vettore informativo h = P0 μ0 + s/σ²."""
    prec = H.latent_precision + np.diag(n_lat / sigma_eps2)
    info = H.latent_info + s_lat / sigma_eps2
    try:
        chol, _ = cho_factor(prec, lower=True)
    except LinAlgError as e:
        raise NumericalError(f"Precisione posterior singolare: {e}") from e
    return np.tril(chol), info


def atom_posterior(H: BaseMeasure, counts: np.ndarray, sums: np.ndarray, sigma_eps2: float) -> AtomPosterior:
    """
    Posterior di φ_k dati i conteggi e le somme per slot dei dati assegnati a k.

    Σ̃⁻¹ = Σ⁻¹ + diag(n_·k)/σ_ε², μ̃ = Σ̃ (Σ⁻¹μ + s_·k/σ_ε²).
    Per la variante constant tutti gli slot vengono aggregati sull'unica
    coordinata latente.

    Args:
        H: Base measure
        counts: Array (M,) dei conteggi per slot
        sums: Array (M,) delle somme per slot
        sigma_eps2: Varianza del rumore

    Returns:
        AtomPosterior; con conteggi nulli coincide con la prior

    Raises:
        NumericalError: Se la precisione posterior non è definita positiva
    """
    _check_sigma(sigma_eps2)
    counts = np.asarray(counts, dtype=float)
    if not counts.any():
        chol = np.linalg.cholesky(H.latent_precision)
        return AtomPosterior(H.latent_mean.copy(), H.latent_cov.copy(), chol, H.slot_map)
    n_lat, s_lat = _latent_stats(H, counts, sums)
    chol, info = _posterior_factor(H, n_lat, s_lat, sigma_eps2)
    mean = cho_solve((chol, True), info)
    cov = cho_solve((chol, True), np.eye(H.latent_dim))
    return AtomPosterior(mean, 0.5 * (cov + cov.T), chol, H.slot_map)


def log_evidence(H: BaseMeasure, counts: np.ndarray, sums: np.ndarray, sumsq: float, sigma_eps2: float) -> float:
    """
    Log-verosimiglianza marginale dei dati assegnati a una componente.

    log Z = −(n/2)log(2πσ²) − Σy²/(2σ²) + ½log|P0| − ½log|Λ| + ½hᵀΛ⁻¹h − ½μ0ᵀP0μ0

    Args:
        H: Base measure
        counts: Array (M,) dei conteggi per slot
        sums: Array (M,) delle somme per slot
        sumsq: Somma totale dei quadrati Σ y²
        sigma_eps2: Varianza del rumore

    Returns:
        log p(dati | componente) con l'atomo integrato rispetto ad H
    """
    _check_sigma(sigma_eps2)
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n == 0:
        return 0.0
    n_lat, s_lat = _latent_stats(H, counts, sums)
    chol, info = _posterior_factor(H, n_lat, s_lat, sigma_eps2)
    white = solve_triangular(chol, info, lower=True)
    logdet_post = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(
        -0.5 * n * (LOG_2PI + np.log(sigma_eps2))
        - 0.5 * float(np.sum(sumsq)) / sigma_eps2
        + 0.5 * H.latent_logdet_precision
        - 0.5 * logdet_post
        + 0.5 * white @ white
        - 0.5 * H.latent_mean @ H.latent_info
    )


def log_predictive_new(H: BaseMeasure, u: int, y: float, sigma_eps2: float) -> float:
    """log N(y; μ_u, Σ_uu + σ_ε²): predittiva a priori di un'osservazione allo slot u."""
    _check_sigma(sigma_eps2)
    mu, var = H.marginal_slot(u)
    var = var + sigma_eps2
    return float(-0.5 * (LOG_2PI + np.log(var) + (y - mu) ** 2 / var))


def predictive_new(H: BaseMeasure, u: int, y: float, sigma_eps2: float) -> float:
    return float(np.exp(log_predictive_new(H, u, y, sigma_eps2)))


def log_predictive_existing(H: BaseMeasure, counts: np.ndarray, sums: np.ndarray, u: int, y: float, sigma_eps2: float) -> float:
    """
    Predittiva di y allo slot u per una componente esistente (forma a scorciatoia).

    counts/sums devono già escludere l'osservazione (u, i).
    Il valore è N(y; μ̃_u, Σ̃_uu + σ_ε²).
    """
    post = atom_posterior(H, counts, sums, sigma_eps2)
    j = H.slot_map[u]
    var = post.latent_cov[j, j] + sigma_eps2
    return float(-0.5 * (LOG_2PI + np.log(var) + (y - post.latent_mean[j]) ** 2 / var))


def predictive_existing(H: BaseMeasure, counts: np.ndarray, sums: np.ndarray, u: int, y: float, sigma_eps2: float) -> float:
    return float(np.exp(log_predictive_existing(H, counts, sums, u, y, sigma_eps2)))


def log_predictive_ratio_form(H: BaseMeasure, counts: np.ndarray, sums: np.ndarray, sumsq: float, u: int, y: float, sigma_eps2: float) -> float:
    """
    Stessa predittiva come rapporto di evidenze Z(dati ∪ {y}) / Z(dati).

    Il rapporto contiene il fattore sqrt(|C_{k+}|/|C_k|) tra le covarianze
    posterior con e senza y.
    """
    counts_plus = np.array(counts, dtype=float)
    sums_plus = np.array(sums, dtype=float)
    counts_plus[u] += 1
    sums_plus[u] += y
    return log_evidence(H, counts_plus, sums_plus, sumsq + y * y, sigma_eps2) - log_evidence(H, counts, sums, sumsq, sigma_eps2)


def log_predictive_block(
    H: BaseMeasure,
    counts: np.ndarray,
    sums: np.ndarray,
    sumsq: float,
    slots: np.ndarray,
    values: np.ndarray,
    sigma_eps2: float,
) -> float:
    """
    Predittiva congiunta di un blocco di osservazioni, anche su più slot.

    Args:
        H: Base measure
        counts, sums, sumsq: Statistiche della componente senza il blocco
            (tutte nulle per una componente nuova, che usa la prior H)
        slots: Array degli slot delle osservazioni del blocco
        values: Array dei valori del blocco
        sigma_eps2: Varianza del rumore

    Returns:
        log f_k^{−y_t}(y_t)

    Raises:
        ParameterError: Se il blocco è vuoto
    """
    values = np.asarray(values, dtype=float)
    slots = np.asarray(slots, dtype=int)
    if values.size == 0:
        raise ParameterError("Blocco di osservazioni vuoto")
    M = H.M
    block_counts = np.bincount(slots, minlength=M).astype(float)
    block_sums = np.bincount(slots, weights=values, minlength=M)
    counts = np.asarray(counts, dtype=float)
    sums = np.asarray(sums, dtype=float)
    base = log_evidence(H, counts, sums, sumsq, sigma_eps2)
    joint = log_evidence(H, counts + block_counts, sums + block_sums, sumsq + float(values @ values), sigma_eps2)
    return joint - base


def block_log_predictive_at(mean: float, var: float, values: np.ndarray, sigma_eps2: float) -> float:
    """
    Predittiva di un blocco concentrato su una sola coordinata latente.

    Con φ_j ~ N(mean, var) e y_i = φ_j + ε_i la matrice di covarianza è
    σ²I + var·11ᵀ, invertibile in forma chiusa.
    """
    n = len(values)
    resid = values - mean
    ratio = 1.0 + n * var / sigma_eps2
    quad = resid @ resid / sigma_eps2 - (var / sigma_eps2 ** 2) * resid.sum() ** 2 / ratio
    return float(-0.5 * (n * (LOG_2PI + np.log(sigma_eps2)) + np.log(ratio) + quad))


class PosteriorCache:
    """
    Momenti posterior latenti (media e varianza diagonale) per componente.

    Le voci sono ricalcolate pigramente dopo `invalidate(k)`; un cambio di
    σ_ε² o di H svuota l'intera cache.
    """

    def __init__(self, H: BaseMeasure, sigma_eps2: float, stats: ComponentStats):
        _check_sigma(sigma_eps2)
        self.H = H
        self.sigma_eps2 = sigma_eps2
        self.stats = stats
        self._means: List[Optional[np.ndarray]] = [None] * stats.K
        self._vars: List[Optional[np.ndarray]] = [None] * stats.K

    def invalidate(self, k: int):
        self._means[k] = None
        self._vars[k] = None

    def invalidate_all(self, H: Optional[BaseMeasure] = None, sigma_eps2: Optional[float] = None):
        if H is not None:
            self.H = H
        if sigma_eps2 is not None:
            _check_sigma(sigma_eps2)
            self.sigma_eps2 = sigma_eps2
        self._means = [None] * self.stats.K
        self._vars = [None] * self.stats.K
        logger.debug("[PosteriorCache] Cache delle predittive invalidata")

    def append(self):
        self._means.append(None)
        self._vars.append(None)

    def delete(self, k: int):
        del self._means[k]
        del self._vars[k]

    def _fill(self, k: int):
        counts = self.stats.counts[k].astype(float)
        if not counts.any():
            self._means[k] = self.H.latent_mean
            self._vars[k] = np.diag(self.H.latent_cov)
            return
        n_lat, s_lat = _latent_stats(self.H, counts, self.stats.sums[k])
        chol, info = _posterior_factor(self.H, n_lat, s_lat, self.sigma_eps2)
        self._means[k] = cho_solve((chol, True), info)
        inv_chol = solve_triangular(chol, np.eye(len(info)), lower=True)
        self._vars[k] = (inv_chol ** 2).sum(axis=0)

    def moments(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        if self._means[k] is None:
            self._fill(k)
        return self._means[k], self._vars[k]

    def slot_moments(self, u: int) -> Tuple[np.ndarray, np.ndarray]:
        """Medie e varianze posterior (K,) di tutte le componenti alla coordinata di u."""
        j = self.H.slot_map[u]
        K = self.stats.K
        means = np.empty(K)
        variances = np.empty(K)
        for k in range(K):
            m, v = self.moments(k)
            means[k] = m[j]
            variances[k] = v[j]
        return means, variances

    def log_predictive(self, u: int, y: float) -> np.ndarray:
        """log f_{uk}(y) per ogni componente k, dati i dati correnti di k."""
        means, variances = self.slot_moments(u)
        var = variances + self.sigma_eps2
        return -0.5 * (LOG_2PI + np.log(var) + (y - means) ** 2 / var)

    def log_predictive_block(self, k: int, u: int, values: np.ndarray) -> float:
        """Predittiva di un blocco allo slot u per la componente k (o la prior se k è None)."""
        if k is None:
            mean, var = self.H.marginal_slot(u)
        else:
            m, v = self.moments(k)
            j = self.H.slot_map[u]
            mean, var = m[j], v[j]
        return block_log_predictive_at(mean, var, values, self.sigma_eps2)
