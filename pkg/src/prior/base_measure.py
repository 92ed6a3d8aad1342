"""Base measure H sugli atomi globali: GP esponenziale, prodotto, costante e catena di Markov."""

import dataclasses
import logging
import threading
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve, cholesky, LinAlgError, solve_triangular
from scipy.stats import norm

from src.models.dataset import CovariateGrid
from src.utils.config import (
    DEFAULT_H_JITTER,
    DEFAULT_H_MEAN,
    DEFAULT_H_OMEGA,
    DEFAULT_H_SIGMA2,
    H_VARIANTS,
    JITTER_MAX_DOUBLINGS,
)
from src.utils.errors import NumericalError, ParameterError

logger = logging.getLogger(__name__)


def cov_matrix(grid: CovariateGrid, sigma2: float, omega: float) -> np.ndarray:
    """
    Covarianza esponenziale ρ(u, v) = σ² exp(−ω‖u − v‖).

    Args:
        grid: Griglia delle covariate
        sigma2: Varianza marginale σ² > 0
        omega: Tasso di decadimento ω > 0

    Returns:
        Matrice (M, M) simmetrica

    Raises:
        ParameterError: Se σ² o ω non sono positivi
    """
    if not sigma2 > 0:
        raise ParameterError(f"H.sigma2 deve essere positivo, trovato {sigma2!r}")
    if not omega > 0:
        raise ParameterError(f"H.omega deve essere positivo, trovato {omega!r}")
    return sigma2 * np.exp(-omega * grid.distances())


def jittered_cholesky(cov: np.ndarray, scale: float, jitter: float = DEFAULT_H_JITTER) -> np.ndarray:
    """
    Fattore di Cholesky inferiore di cov + ε·scale·I.

    ε parte da `jitter` e raddoppia fino a JITTER_MAX_DOUBLINGS volte.

    Raises:
        NumericalError: Se la fattorizzazione fallisce anche con il jitter massimo
    """
    eye = np.eye(cov.shape[0])
    eps = jitter
    for attempt in range(JITTER_MAX_DOUBLINGS + 1):
        try:
            return cholesky(cov + eps * scale * eye, lower=True)
        except LinAlgError:
            logger.debug(f"[BaseMeasure] Cholesky fallita con jitter {eps:.3g}·σ² (tentativo {attempt + 1})")
            eps *= 2.0
    raise NumericalError(f"Cholesky fallita dopo {JITTER_MAX_DOUBLINGS} raddoppi del jitter (ultimo {eps / 2:.3g}·σ²)")


@dataclass(frozen=True, eq=False)
class BaseMeasure:
    """
    Distribuzione H sugli atomi φ = (φ_u : u ∈ V).

    Internamente H è una Gaussiana su un vettore latente di dimensione D:
    D = M per gp, product e markov-chain, D = 1 per la variante constant.
    `slot_map[u]` indica la coordinata latente letta dallo slot u.

    Attributes:
        variant: Una tra gp, product, constant, markov-chain
        grid: Griglia delle covariate
        mean: Media μ (scalare o vettore per slot)
        sigma2: Varianza σ²
        omega: Decadimento ω (gp, markov-chain)
        variances: Varianze per slot (solo product; default σ² ovunque)
        jitter: Jitter relativo aggiunto alla diagonale
    """
    variant: str
    grid: CovariateGrid
    mean: np.ndarray = DEFAULT_H_MEAN
    sigma2: float = DEFAULT_H_SIGMA2
    omega: float = DEFAULT_H_OMEGA
    variances: Optional[np.ndarray] = None
    jitter: float = DEFAULT_H_JITTER

    def __post_init__(self):
        if self.variant not in H_VARIANTS:
            raise ParameterError(f"H.variant sconosciuta: {self.variant!r} (ammesse: {H_VARIANTS})")
        if not self.sigma2 > 0:
            raise ParameterError(f"H.sigma2 deve essere positivo, trovato {self.sigma2!r}")
        if self.variant in ("gp", "markov-chain") and not self.omega > 0:
            raise ParameterError(f"H.omega deve essere positivo, trovato {self.omega!r}")
        if self.variant == "markov-chain" and self.grid.dim != 1:
            raise ParameterError("La variante markov-chain richiede una griglia unidimensionale")
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (self.grid.M,)).copy()
        if self.variant == "constant" and np.ptp(mean) != 0:
            raise ParameterError("La variante constant richiede una media uguale su tutti gli slot")
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        if self.variances is not None:
            variances = np.broadcast_to(np.asarray(self.variances, dtype=float), (self.grid.M,)).copy()
            if np.any(~(variances > 0)):
                raise ParameterError(f"H.variances devono essere positive, trovato {variances!r}")
            object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "_lock", threading.Lock())

    @property
    def M(self) -> int:
        return self.grid.M

    @property
    def latent_dim(self) -> int:
        return 1 if self.variant == "constant" else self.M

    @cached_property
    def slot_map(self) -> np.ndarray:
        if self.variant == "constant":
            return np.zeros(self.M, dtype=int)
        return np.arange(self.M)

    @cached_property
    def latent_mean(self) -> np.ndarray:
        return self.mean[:1].copy() if self.variant == "constant" else self.mean.copy()

    @cached_property
    def latent_cov(self) -> np.ndarray:
        if self.variant == "constant":
            return np.array([[self.sigma2]])
        if self.variant == "product":
            variances = self.variances if self.variances is not None else np.full(self.M, self.sigma2)
            return np.diag(variances)
        return cov_matrix(self.grid, self.sigma2, self.omega)

    @cached_property
    def latent_chol(self) -> np.ndarray:
        with self._lock:
            if self.variant == "product" or self.variant == "constant":
                return np.diag(np.sqrt(np.diag(self.latent_cov)))
            return jittered_cholesky(self.latent_cov, self.sigma2, self.jitter)

    @cached_property
    def latent_precision(self) -> np.ndarray:
        """Precisione della Gaussiana latente (tridiagonale analitica per markov-chain)."""
        if self.variant == "markov-chain":
            return self._chain_precision()
        if self.variant in ("product", "constant"):
            return np.diag(1.0 / np.diag(self.latent_cov))
        prec = cho_solve((self.latent_chol, True), np.eye(self.latent_dim))
        return 0.5 * (prec + prec.T)

    @cached_property
    def latent_info(self) -> np.ndarray:
        """Vettore informativo P0 μ0."""
        return self.latent_precision @ self.latent_mean

    @cached_property
    def latent_logdet_precision(self) -> float:
        if self.variant == "markov-chain":
            return float(np.linalg.slogdet(self.latent_precision)[1])
        return float(-2.0 * np.sum(np.log(np.diag(self.latent_chol))))

    def _chain_precision(self) -> np.ndarray:
        # AR(1) stazionaria sugli slot ordinati: x_{j+1} | x_j ~ N(ρ_j x_j, σ²(1 − ρ_j²))
        order = np.argsort(self.grid.points[:, 0])
        coords = self.grid.points[order, 0]
        rho = np.exp(-self.omega * np.diff(coords))
        innov = 1.0 - rho ** 2
        if np.any(innov <= 0):
            raise NumericalError("Catena di Markov degenere: slot coincidenti o ω troppo piccolo")
        n = self.M
        diag = np.zeros(n)
        diag[0] += 1.0
        diag[1:] += 1.0 / innov
        diag[:-1] += rho ** 2 / innov
        off = -rho / innov
        prec_sorted = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        prec = np.empty_like(prec_sorted)
        prec[np.ix_(order, order)] = prec_sorted
        return prec / self.sigma2

    def covariance(self) -> np.ndarray:
        """Covarianza (M, M) degli atomi sugli slot (di rango 1 per constant)."""
        idx = self.slot_map
        return self.latent_cov[np.ix_(idx, idx)]

    def with_kernel(self, sigma2: float, omega: float) -> "BaseMeasure":
        """Nuova base measure con (σ², ω) aggiornati e cache vuote."""
        return dataclasses.replace(self, mean=self.mean, sigma2=sigma2, omega=omega)

    def expand(self, latent: np.ndarray) -> np.ndarray:
        """Porta vettori latenti (..., D) sugli slot (..., M)."""
        return latent[..., self.slot_map]

    def sample_atom(self, rng: np.random.Generator) -> np.ndarray:
        """
        Estrae φ ~ H.

        Args:
            rng: Generatore numpy

        Returns:
            Array (M,); per la variante constant tutte le componenti sono uguali
        """
        return self.sample_atoms(1, rng)[0]

    def sample_atoms(self, n: int, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal((n, self.latent_dim))
        return self.expand(self.latent_mean + noise @ self.latent_chol.T)

    def log_density(self, phi: np.ndarray) -> float:
        """
        Log-densità di H in φ.

        Returns:
            Log-densità normale multivariata; per constant la densità univariata
            se tutte le componenti coincidono, altrimenti −inf

        Raises:
            ParameterError: Se la lunghezza di φ non è M
        """
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.M,):
            raise ParameterError(f"Atomo di lunghezza {phi.shape}, atteso ({self.M},)")
        if self.variant == "constant":
            if np.ptp(phi) != 0:
                return -np.inf
            return float(norm.logpdf(phi[0], loc=self.latent_mean[0], scale=np.sqrt(self.sigma2)))
        diff = phi - self.latent_mean
        white = solve_triangular(self.latent_chol, diff, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(self.latent_chol)))
        return float(-0.5 * (self.M * np.log(2 * np.pi) + logdet + white @ white))

    def marginal_slot(self, u: int) -> Tuple[float, float]:
        """Marginale H_u: (μ_u, Σ_uu)."""
        if not 0 <= u < self.M:
            raise ParameterError(f"Slot {u} fuori dalla griglia (M={self.M})")
        j = self.slot_map[u]
        return float(self.latent_mean[j]), float(self.latent_cov[j, j])

    def conditional_slot(self, phi: np.ndarray, u: int) -> Tuple[float, float]:
        """
        Condizionale H(φ_u | φ_{−u}) tramite la precisione.

        Args:
            phi: Atomo (M,); il valore allo slot u viene ignorato
            u: Slot da condizionare

        Returns:
            Coppia (media, varianza); per constant la condizionale è degenere
            nel valore comune degli altri slot (varianza 0)

        Raises:
            ParameterError: Se M < 2 o u fuori griglia
            NumericalError: Se la precisione diagonale non è positiva
        """
        if self.M < 2:
            raise ParameterError("conditional_slot richiede almeno due slot")
        if not 0 <= u < self.M:
            raise ParameterError(f"Slot {u} fuori dalla griglia (M={self.M})")
        phi = np.asarray(phi, dtype=float)
        if self.variant == "constant":
            other = phi[1] if u == 0 else phi[0]
            return float(other), 0.0
        prec = self.latent_precision
        p_uu = prec[u, u]
        if not p_uu > 0:
            raise NumericalError(f"Precisione non positiva allo slot {u}")
        diff = phi - self.mean
        diff[u] = 0.0
        mean = self.mean[u] - (prec[u] @ diff) / p_uu
        return float(mean), float(1.0 / p_uu)
