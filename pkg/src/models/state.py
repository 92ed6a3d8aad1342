"""Stato delle catene MCMC: iperparametri, conteggi e record di traccia."""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from src.models.sticks import StickWeights
from src.utils.config import ALPHA_PRIOR, GAMMA_PRIOR, SIGMA_EPS_PRIOR
from src.utils.errors import CorruptionError, ParameterError


@dataclass
class HyperParams:
    """
    Valori correnti e prior degli iperparametri.

    Le prior Gamma sono in forma shape/rate, la prior su σ_ε² è
    InvGamma(shape, scale).
    """
    gamma: float
    alpha: np.ndarray
    sigma_eps2: float
    gamma_prior: Tuple[float, float] = GAMMA_PRIOR
    alpha_prior: Tuple[float, float] = ALPHA_PRIOR
    sigma_eps_prior: Tuple[float, float] = SIGMA_EPS_PRIOR
    resample_gamma: bool = True
    resample_alpha: bool = True
    resample_sigma_eps: bool = True
    alpha_shared: bool = True

    def __post_init__(self):
        self.alpha = np.array(self.alpha, dtype=float).reshape(-1)
        if not self.gamma > 0:
            raise ParameterError(f"γ deve essere positivo, trovato {self.gamma!r}")
        if self.alpha.size == 0 or np.any(~(self.alpha > 0)):
            raise ParameterError(f"α_u devono essere positivi, trovato {self.alpha!r}")
        if not self.sigma_eps2 > 0:
            raise ParameterError(f"σ_ε² deve essere positivo, trovato {self.sigma_eps2!r}")
        for name, prior in (("prior.gamma", self.gamma_prior), ("prior.alpha", self.alpha_prior), ("prior.sigma_eps", self.sigma_eps_prior)):
            if len(prior) != 2 or not (prior[0] > 0 and prior[1] > 0):
                raise ParameterError(f"{name} deve avere due parametri positivi, trovato {prior!r}")
        if self.alpha_shared and np.ptp(self.alpha) != 0:
            raise ParameterError("alpha.shared attivo ma gli α_u non sono uguali")

    @classmethod
    def build(cls, M: int, gamma: float, alpha: float, sigma_eps2: float, **kwargs) -> "HyperParams":
        return cls(gamma=gamma, alpha=np.full(M, float(alpha)), sigma_eps2=sigma_eps2, **kwargs)

    def copy(self) -> "HyperParams":
        return HyperParams(
            gamma=self.gamma,
            alpha=self.alpha.copy(),
            sigma_eps2=self.sigma_eps2,
            gamma_prior=self.gamma_prior,
            alpha_prior=self.alpha_prior,
            sigma_eps_prior=self.sigma_eps_prior,
            resample_gamma=self.resample_gamma,
            resample_alpha=self.resample_alpha,
            resample_sigma_eps=self.resample_sigma_eps,
            alpha_shared=self.alpha_shared,
        )


@dataclass
class CountStats:
    """
    Conteggi della franchise: n_u·k, m_uk e, per il sampler marginale, n_ut.

    Attributes:
        n_uk: Array (M, K) delle osservazioni al gruppo u assegnate alla componente k
        m_uk: Array (M, K) delle istanze al gruppo u che puntano a k
        n_t: Array (T,) delle osservazioni per istanza (None per lo stato condizionale)
        owner_t: Array (T,) del gruppo proprietario di ogni istanza
    """
    n_uk: np.ndarray
    m_uk: np.ndarray
    n_t: Optional[np.ndarray] = None
    owner_t: Optional[np.ndarray] = None

    @property
    def n_u(self) -> np.ndarray:
        return self.n_uk.sum(axis=1)

    @property
    def m_u(self) -> np.ndarray:
        return self.m_uk.sum(axis=1)

    @property
    def q_k(self) -> np.ndarray:
        return self.m_uk.sum(axis=0)

    @property
    def q_total(self) -> int:
        return int(self.m_uk.sum())

    @property
    def K(self) -> int:
        return int(np.count_nonzero(self.q_k))

    def n_ut(self, u: int) -> np.ndarray:
        """Conteggi delle istanze possedute dal gruppo u."""
        if self.n_t is None:
            raise CorruptionError("Conteggi per istanza non disponibili nello stato condizionale")
        return self.n_t[self.owner_t == u]

    def matches(self, other: "CountStats") -> bool:
        same = (
            self.n_uk.shape == other.n_uk.shape
            and np.array_equal(self.n_uk, other.n_uk)
            and np.array_equal(self.m_uk, other.m_uk)
        )
        if self.n_t is not None or other.n_t is not None:
            same = same and np.array_equal(self.n_t, other.n_t) and np.array_equal(self.owner_t, other.owner_t)
        return same


@dataclass
class ConditionalState:
    """
    Stato della catena condizionale (z, m, β, φ).

    Attributes:
        z: Array (N,) della componente di ogni osservazione
        n_uk: Array (M, K) dei conteggi mantenuti incrementalmente
        m_uk: Array (M, K) dei table count
        beta: Array (K+1,) dei pesi globali, β_new in coda
        atoms: Array (K, M) degli atomi globali
        hyper: Iperparametri correnti
    """
    z: np.ndarray
    n_uk: np.ndarray
    m_uk: np.ndarray
    beta: np.ndarray
    atoms: np.ndarray
    hyper: HyperParams

    @property
    def K(self) -> int:
        return self.atoms.shape[0]

    @property
    def q_k(self) -> np.ndarray:
        return self.m_uk.sum(axis=0)

    @property
    def sticks(self) -> StickWeights:
        return StickWeights.from_vector(self.beta)

    def counts(self) -> CountStats:
        return CountStats(n_uk=self.n_uk.copy(), m_uk=self.m_uk.copy())


@dataclass
class MarginalState:
    """
    Stato della catena marginale (t, k) con atomi integrati.

    Le istanze sono locali al gruppo: owner_t[t] è l'unico gruppo che le usa.
    Gli indici sono compattati a ogni cancellazione, per cui l'ordine degli
    indici coincide con l'ordine di creazione.

    Attributes:
        t: Array (N,) dell'istanza di ogni osservazione
        k_of_t: Array (T,) della componente di ogni istanza
        owner_t: Array (T,) del gruppo proprietario di ogni istanza
        n_t: Array (T,) dei conteggi per istanza
        m_uk: Array (M, K) delle istanze per gruppo e componente
        hyper: Iperparametri correnti
        atoms: Ultima estrazione degli atomi dalla posterior (solo per traccia e σ_ε²)
    """
    t: np.ndarray
    k_of_t: np.ndarray
    owner_t: np.ndarray
    n_t: np.ndarray
    m_uk: np.ndarray
    hyper: HyperParams
    atoms: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return self.m_uk.shape[1]

    @property
    def T(self) -> int:
        return len(self.k_of_t)

    @property
    def q_k(self) -> np.ndarray:
        return self.m_uk.sum(axis=0)

    def z(self) -> np.ndarray:
        """Componente derivata z_ui = k_{t_ui}."""
        if self.T == 0:
            return np.zeros(0, dtype=int)
        return np.asarray(self.k_of_t, dtype=int)[self.t]


def recompute_counts(state: Union[ConditionalState, MarginalState], groups: np.ndarray, M: int) -> CountStats:
    """
    Ricalcola i conteggi da zero; è l'oracolo per quelli incrementali.

    Args:
        state: Stato condizionale o marginale
        groups: Array (N,) dello slot di ogni osservazione
        M: Numero di slot della griglia

    Returns:
        CountStats ricalcolato

    Raises:
        CorruptionError: Se un indice è fuori range o un'istanza è usata da più gruppi
    """
    groups = np.asarray(groups, dtype=int)
    if isinstance(state, ConditionalState):
        K = state.K
        z = np.asarray(state.z, dtype=int)
        bad = np.flatnonzero((z < 0) | (z >= K))
        if bad.size:
            raise CorruptionError(f"Indice di componente fuori range: z[{bad[0]}]={z[bad[0]]} con K={K}")
        if state.m_uk.shape != (M, K):
            raise CorruptionError(f"m_uk di forma {state.m_uk.shape}, attesa {(M, K)}")
        n_uk = np.zeros((M, K), dtype=int)
        np.add.at(n_uk, (groups, z), 1)
        return CountStats(n_uk=n_uk, m_uk=state.m_uk.copy())

    T = state.T
    K = state.K
    t = np.asarray(state.t, dtype=int)
    bad = np.flatnonzero((t < 0) | (t >= T))
    if bad.size:
        raise CorruptionError(f"Indice di istanza fuori range: t[{bad[0]}]={t[bad[0]]} con T={T}")
    k_of_t = np.asarray(state.k_of_t, dtype=int)
    bad = np.flatnonzero((k_of_t < 0) | (k_of_t >= K))
    if bad.size:
        raise CorruptionError(f"Indice di componente fuori range: k[{bad[0]}]={k_of_t[bad[0]]} con K={K}")
    owner = np.asarray(state.owner_t, dtype=int)
    mismatch = np.flatnonzero(owner[t] != groups) if T else np.zeros(0, dtype=int)
    if mismatch.size:
        i = mismatch[0]
        raise CorruptionError(f"L'osservazione {i} del gruppo {groups[i]} usa l'istanza {t[i]} del gruppo {owner[t[i]]}")
    n_t = np.bincount(t, minlength=T)
    n_uk = np.zeros((M, K), dtype=int)
    m_uk = np.zeros((M, K), dtype=int)
    if T:
        np.add.at(n_uk, (groups, k_of_t[t]), 1)
        np.add.at(m_uk, (owner[n_t > 0], k_of_t[n_t > 0]), 1)
    return CountStats(n_uk=n_uk, m_uk=m_uk, n_t=n_t, owner_t=owner)


def marginal_counts(state: MarginalState, groups: np.ndarray, M: int) -> CountStats:
    """Conteggi mantenuti incrementalmente dallo stato marginale."""
    n_uk = np.zeros((M, state.K), dtype=int)
    if state.T:
        np.add.at(n_uk, (np.asarray(groups, dtype=int), state.z()), 1)
    return CountStats(
        n_uk=n_uk,
        m_uk=state.m_uk.copy(),
        n_t=np.asarray(state.n_t, dtype=int),
        owner_t=np.asarray(state.owner_t, dtype=int),
    )


@dataclass
class TraceRecord:
    """
    Fotografia di una sweep.

    Attributes:
        sweep: Indice della sweep (da 1)
        gamma: Concentrazione globale
        alpha: Array (M,) delle concentrazioni locali
        sigma_eps2: Varianza del rumore
        z: Array (N,) delle componenti
        atoms: Array (K, M) degli atomi
        beta: Array (K+1,) dei pesi globali (per il marginale la loro media di Pólya)
        kernel: Coppia (σ², ω) della base measure al momento della sweep
    """
    sweep: int
    gamma: float
    alpha: np.ndarray
    sigma_eps2: float
    z: np.ndarray
    atoms: np.ndarray
    beta: np.ndarray
    kernel: Tuple[float, float] = field(default=(float("nan"), float("nan")))

    @property
    def K(self) -> int:
        return self.atoms.shape[0]
