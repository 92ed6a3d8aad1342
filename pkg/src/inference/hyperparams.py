"""Aggiornamenti degli iperparametri: concentrazioni con variabili ausiliarie, σ_ε² coniugata, MH sul kernel."""

import logging
from typing import Tuple

import numpy as np
from scipy.stats import bernoulli, beta, gamma, invgamma

from src.models.state import HyperParams
from src.prior.base_measure import BaseMeasure
from src.utils.config import KERNEL_MH_STEP
from src.utils.errors import NumericalError

logger = logging.getLogger(__name__)


def sample_concentration(value: float, a: float, b: float, num_clusters: int, num_items: int, rng: np.random.Generator) -> float:
    """
    Aggiornamento con variabile ausiliaria η per una concentrazione con prior Gamma(a, b).

    η ~ Beta(c + 1, n); con probabilità π = (a + K − 1) / (a + K − 1 + n(b − log η))
    si estrae da Gamma(a + K, b − log η), altrimenti da Gamma(a + K − 1, b − log η).

    Args:
        value: Valore corrente c
        a: Shape della prior
        b: Rate della prior
        num_clusters: K (o m_u per i gruppi)
        num_items: n (q· per γ, n_u per α_u)
        rng: Generatore numpy

    Returns:
        Nuovo valore; invariato se num_items = 0
    """
    if num_items == 0:
        return value
    eta = beta.rvs(a=value + 1.0, b=num_items, random_state=rng)
    shape = a + num_clusters - 1.0
    rate = b - np.log(eta)
    x = shape / (num_items * rate)
    pi = x / (1.0 + x)
    shape += bernoulli.rvs(pi, random_state=rng)
    new_value = gamma.rvs(shape, scale=1.0 / rate, random_state=rng)
    return max(float(new_value), 1e-10)


def sample_gamma(hyper: HyperParams, K: int, q_total: int, rng: np.random.Generator) -> float:
    """Nuovo γ dati K componenti e q· istanze; no-op se q· = 0."""
    if q_total == 0:
        logger.debug("[Hyperparams] q· = 0, aggiornamento di γ saltato")
        return hyper.gamma
    a, b = hyper.gamma_prior
    return sample_concentration(hyper.gamma, a, b, K, q_total, rng)


def sample_alpha_shared(alpha: float, a: float, b: float, n_u: np.ndarray, m_u: np.ndarray, rng: np.random.Generator) -> float:
    """
    α comune a tutti i gruppi con ausiliarie w_u ~ Beta(α+1, n_u), s_u ~ Bernoulli(n_u/(n_u+α)).

    α ~ Gamma(a + Σ m_u − Σ s_u, b − Σ log w_u), sui soli gruppi non vuoti.
    """
    active = n_u > 0
    if not active.any():
        return alpha
    n = n_u[active].astype(float)
    w = beta.rvs(a=alpha + 1.0, b=n, random_state=rng)
    s = bernoulli.rvs(n / (n + alpha), random_state=rng)
    shape = a + m_u[active].sum() - np.sum(s)
    rate = b - np.sum(np.log(w))
    new_value = gamma.rvs(shape, scale=1.0 / rate, random_state=rng)
    return max(float(new_value), 1e-10)


def sample_alpha(hyper: HyperParams, n_u: np.ndarray, m_u: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Nuovi α_u; n_u e m_u giocano il ruolo di q· e K.

    Returns:
        Array (M,) degli α_u (tutti uguali se alpha_shared)
    """
    a, b = hyper.alpha_prior
    n_u = np.asarray(n_u)
    m_u = np.asarray(m_u)
    if hyper.alpha_shared:
        value = sample_alpha_shared(float(hyper.alpha[0]), a, b, n_u, m_u, rng)
        return np.full_like(hyper.alpha, value)
    alpha = hyper.alpha.copy()
    for u in range(len(alpha)):
        alpha[u] = sample_concentration(alpha[u], a, b, int(m_u[u]), int(n_u[u]), rng)
    return alpha


def sample_sigma_eps(hyper: HyperParams, residuals: np.ndarray, rng: np.random.Generator) -> float:
    """
    σ_ε² ~ InvGamma(a_ε + N/2, b_ε + ½ Σ r²) dai residui y_ui − φ_{u,z_ui}.
    """
    a, b = hyper.sigma_eps_prior
    residuals = np.asarray(residuals, dtype=float)
    shape = a + 0.5 * residuals.size
    scale = b + 0.5 * float(residuals @ residuals)
    return float(invgamma.rvs(shape, scale=scale, random_state=rng))


class KernelMH:
    """
    Metropolis–Hastings a passeggiata casuale in log-scala su (σ², ω) della base measure.

    Le prior su σ² e ω sono Gamma(shape, rate); il target usa le densità H(φ_k)
    degli atomi correnti.
    """

    def __init__(self, sigma2_prior: Tuple[float, float], omega_prior: Tuple[float, float], step: float = KERNEL_MH_STEP):
        self.sigma2_prior = sigma2_prior
        self.omega_prior = omega_prior
        self.step = step
        self.proposed = 0
        self.accepted = 0

    def _log_target(self, H: BaseMeasure, atoms: np.ndarray) -> float:
        lp = sum(H.log_density(phi) for phi in atoms)
        lp += gamma.logpdf(H.sigma2, self.sigma2_prior[0], scale=1.0 / self.sigma2_prior[1])
        lp += gamma.logpdf(H.omega, self.omega_prior[0], scale=1.0 / self.omega_prior[1])
        # jacobiano della passeggiata in log-scala
        return float(lp + np.log(H.sigma2) + np.log(H.omega))

    def step_kernel(self, H: BaseMeasure, atoms: np.ndarray, rng: np.random.Generator) -> BaseMeasure:
        """
        Un passo MH; restituisce la base measure (nuova se la proposta è accettata).
        """
        noise = self.step * rng.standard_normal(2)
        proposal = H.with_kernel(H.sigma2 * float(np.exp(noise[0])), H.omega * float(np.exp(noise[1])))
        self.proposed += 1
        try:
            log_ratio = self._log_target(proposal, atoms) - self._log_target(H, atoms)
        except NumericalError as e:
            logger.debug(f"[KernelMH] Proposta scartata: {e}")
            return H
        if np.log(rng.uniform()) < log_ratio:
            self.accepted += 1
            logger.debug(f"[KernelMH] Accettato σ²={proposal.sigma2:.4g}, ω={proposal.omega:.4g}")
            return proposal
        return H

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0
