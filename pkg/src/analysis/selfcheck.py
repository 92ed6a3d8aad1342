"""Suite di oracoli veloci: formule chiuse contro quadratura, simulazione e invarianti dei sampler."""

import logging
import os
from typing import Callable, List, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import dblquad, quad
from scipy.special import gammaln, logsumexp
from scipy.stats import multivariate_normal, norm

from src.analysis.moments import EventRect, closed_form_moments, corr_Q, mc_truncated, var_G, var_Q
from src.inference.conditional import ConditionalSampler
from src.inference.marginal import MarginalSampler
from src.models.dataset import CovariateGrid, GroupedDataset
from src.models.state import HyperParams
from src.prior.base_measure import BaseMeasure
from src.prior.combinatorics import StirlingTable
from src.prior.conjugate import atom_posterior, log_predictive_existing, log_predictive_ratio_form, predictive_existing, predictive_new
from src.utils.errors import NHDPError

logger = logging.getLogger(__name__)

SELFCHECK_FILENAME = "selfcheck.csv"
CheckResult = Tuple[bool, str]


def _random_instance(rng: np.random.Generator, M: int, variant: str = "gp"):
    """Base measure, statistiche di una componente e un punto di valutazione casuali."""
    grid = CovariateGrid(np.sort(rng.uniform(0, 10, size=M)))
    H = BaseMeasure(variant, grid, mean=rng.normal(), sigma2=rng.uniform(0.5, 2.0), omega=rng.uniform(0.01, 1.0))
    sigma_eps2 = rng.uniform(0.05, 0.5)
    counts = rng.integers(0, 4, size=M).astype(float)
    phi = H.sample_atom(rng)
    obs = [phi[u] + np.sqrt(sigma_eps2) * rng.standard_normal(int(c)) for u, c in enumerate(counts)]
    sums = np.array([o.sum() for o in obs])
    sumsq = float(sum(o @ o for o in obs))
    u = int(rng.integers(M))
    y = phi[u] + rng.normal()
    return H, counts, sums, sumsq, obs, sigma_eps2, u, y


def check_dual_formula(rng: np.random.Generator, instances: int = 1000) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        H, counts, sums, sumsq, _, s2, u, y = _random_instance(rng, int(rng.integers(1, 5)))
        short = log_predictive_existing(H, counts, sums, u, y, s2)
        ratio = log_predictive_ratio_form(H, counts, sums, sumsq, u, y, s2)
        worst = max(worst, abs(np.expm1(ratio - short)))
    return worst <= 1e-10, f"errore relativo massimo {worst:.3g} su {instances} istanze"


def _log_target(phi: np.ndarray, H: BaseMeasure, obs: List[np.ndarray], s2: float) -> float:
    loglik = sum(norm.logpdf(o, loc=phi[u], scale=np.sqrt(s2)).sum() for u, o in enumerate(obs))
    return loglik + multivariate_normal.logpdf(phi, mean=H.mean, cov=H.covariance())


def _quadrature_predictive(H: BaseMeasure, obs: List[np.ndarray], s2: float, u: int, y: float, counts, sums) -> float:
    """∫ F(y | φ_u) p(φ | dati) dφ integrando numericamente la posterior non normalizzata."""
    post = atom_posterior(H, counts, sums, s2)
    center, sd = post.mean, np.sqrt(np.diag(post.cov))
    c = _log_target(center, H, obs, s2)

    def weight(phi):
        return np.exp(_log_target(phi, H, obs, s2) - c)

    def lik(phi):
        return norm.pdf(y, loc=phi[u], scale=np.sqrt(s2))

    lo, hi = center - 12 * sd, center + 12 * sd
    if H.M == 1:
        num = quad(lambda a: lik(np.array([a])) * weight(np.array([a])), lo[0], hi[0], epsabs=0, epsrel=1e-10)[0]
        den = quad(lambda a: weight(np.array([a])), lo[0], hi[0], epsabs=0, epsrel=1e-10)[0]
    else:
        num = dblquad(lambda b, a: lik(np.array([a, b])) * weight(np.array([a, b])), lo[0], hi[0], lo[1], hi[1], epsabs=0, epsrel=1e-9)[0]
        den = dblquad(lambda b, a: weight(np.array([a, b])), lo[0], hi[0], lo[1], hi[1], epsabs=0, epsrel=1e-9)[0]
    return num / den


def check_predictive_quadrature(rng: np.random.Generator, instances: int = 50) -> CheckResult:
    worst = 0.0
    for i in range(instances):
        M = 1 if i < instances - 10 else 2
        H, counts, sums, _, obs, s2, u, y = _random_instance(rng, M)
        closed = predictive_existing(H, counts, sums, u, y, s2)
        numeric = _quadrature_predictive(H, obs, s2, u, y, counts, sums)
        worst = max(worst, abs(closed - numeric) / numeric)
        mu, var = H.marginal_slot(u)
        prior_numeric = quad(lambda a: norm.pdf(y, a, np.sqrt(s2)) * norm.pdf(a, mu, np.sqrt(var)), -np.inf, np.inf, epsabs=0, epsrel=1e-10)[0]
        worst = max(worst, abs(predictive_new(H, u, y, s2) - prior_numeric) / prior_numeric)
    return worst <= 1e-6, f"errore relativo massimo {worst:.3g} su {instances} istanze (M <= 2)"


def check_antoniak(rng: np.random.Generator, draws: int = 100_000) -> CheckResult:
    table = StirlingTable()
    details, ok = [], True
    for n, a in ((5, 0.5), (10, 1.0), (20, 2.0)):
        sampled = np.array([table.sample_table_count(n, a, rng) for _ in range(draws)])
        crp = (rng.random((draws, n)) < a / (a + np.arange(n))).sum(axis=1)
        p = np.bincount(sampled, minlength=n + 1) / draws
        q = np.bincount(crp, minlength=n + 1) / draws
        tv = 0.5 * np.abs(p - q).sum()
        ok &= tv < 0.02
        details.append(f"(n={n}, a={a}) TV={tv:.4f}")
    return ok, "; ".join(details)


def check_stirling_identity() -> CheckResult:
    table = StirlingTable()
    worst = 0.0
    for n in range(1, 51):
        row = table.row(n)
        for a in (0.5, 1.0, 2.0, 7.3):
            lhs = logsumexp(row + np.arange(len(row)) * np.log(a))
            rhs = gammaln(a + n) - gammaln(a)
            worst = max(worst, abs(np.expm1(lhs - rhs)))
    return worst <= 1e-9, f"errore relativo massimo {worst:.3g} per n <= 50"


def check_moment_limits() -> CheckResult:
    grid = CovariateGrid(np.array([0.0, 1.0]))
    A, B = EventRect(0, -np.inf, 0.0), EventRect(1, -np.inf, 0.0)
    product = corr_Q(BaseMeasure("product", grid), 1.0, A, B)
    gp = BaseMeasure("gp", grid, sigma2=1.0, omega=0.05)
    same = corr_Q(gp, 1.0, A, A)
    bound = var_G(gp, 2.0, 3.0, A) >= var_Q(gp, 2.0, A)
    ok = abs(product) < 1e-12 and abs(same - 1.0) < 1e-12 and bound
    return ok, f"corr prodotto={product:.3g}, corr stesso evento={same:.12f}, Var(G) >= Var(Q): {bound}"


def check_moments_monte_carlo(rng: np.random.Generator) -> CheckResult:
    grid = CovariateGrid(np.array([0.0, 1.0]))
    H = BaseMeasure("gp", grid, sigma2=1.0, omega=0.05)
    gamma, alpha, L = 1.0, (1.0, 1.0), 1000
    events = (EventRect(0, -np.inf, 0.0), EventRect(1, -np.inf, 0.0))
    closed = closed_form_moments(H, gamma, alpha, *events)
    mc = mc_truncated(H, gamma, alpha, events, rng, L=L)
    failed = []
    for row in mc.itertuples(index=False):
        allowance = 3 * row.se + abs(closed[row.quantity]) * gamma / L
        if abs(row.estimate - closed[row.quantity]) > allowance:
            failed.append(f"{row.quantity}: {row.estimate:.4g} vs {closed[row.quantity]:.4g}")
    return not failed, "; ".join(failed) or f"{len(mc)} momenti entro 3 SE"


def _small_dataset(rng: np.random.Generator) -> GroupedDataset:
    grid = CovariateGrid.regular(3)
    return GroupedDataset(grid, [np.concatenate([rng.normal(-1, 0.2, 4), rng.normal(1, 0.2, 4)]) for _ in range(3)])


def check_hdp_reduction(rng: np.random.Generator, sweeps: int = 30) -> CheckResult:
    data = _small_dataset(rng)
    H = BaseMeasure("constant", data.grid)
    sampler = ConditionalSampler(data, H, HyperParams.build(data.M, 1.0, 1.0, 0.1), rng)
    sampler.initialize()
    spreads = []
    sampler.run(sweeps, callback=lambda r: spreads.append(np.ptp(r.atoms, axis=1).max(initial=0.0)), log_every=0)
    worst = max(spreads)
    return worst == 0.0, f"massima differenza tra slot dello stesso atomo: {worst:.3g}"


def check_count_invariants(rng: np.random.Generator, sweeps: int = 30) -> CheckResult:
    data = _small_dataset(rng)
    H = BaseMeasure("gp", data.grid, sigma2=1.0, omega=0.05)
    details = []
    for cls in (ConditionalSampler, MarginalSampler):
        sampler = cls(data, H, HyperParams.build(data.M, 1.0, 1.0, 0.1), rng, check_counts=True)
        sampler.initialize(init="random", init_k=3)
        try:
            sampler.run(sweeps, log_every=0)
        except NHDPError as e:
            return False, f"{cls.name}: {e}"
        details.append(f"{cls.name} ok")
    return True, ", ".join(details)


def selfcheck_suite(rng: np.random.Generator) -> List[Tuple[str, Callable[[], CheckResult]]]:
    return [
        ("dual_formula", lambda: check_dual_formula(rng)),
        ("predictive_quadrature", lambda: check_predictive_quadrature(rng)),
        ("antoniak_tv", lambda: check_antoniak(rng)),
        ("stirling_identity", check_stirling_identity),
        ("moment_limits", check_moment_limits),
        ("moments_monte_carlo", lambda: check_moments_monte_carlo(rng)),
        ("hdp_reduction", lambda: check_hdp_reduction(rng)),
        ("count_invariants", lambda: check_count_invariants(rng)),
    ]


def run_selfcheck(out_dir: str, seed: int = 0) -> pd.DataFrame:
    """
    Esegue la suite di oracoli e scrive `selfcheck.csv` (check, passed, detail).

    Un check che solleva un'eccezione del progetto è registrato come fallito.

    Returns:
        DataFrame dei risultati
    """
    rng = np.random.default_rng(seed)
    rows = []
    for name, check in selfcheck_suite(rng):
        logger.info(f"[SelfCheck] {name}...")
        try:
            passed, detail = check()
        except NHDPError as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        mark = "✓" if passed else "✗"
        log = logger.info if passed else logger.error
        log(f"[SelfCheck] {mark} {name}: {detail}")
        rows.append({"check": name, "passed": bool(passed), "detail": detail})
    results = pd.DataFrame(rows)
    os.makedirs(out_dir, exist_ok=True)
    results.to_csv(os.path.join(out_dir, SELFCHECK_FILENAME), index=False)
    logger.info(f"[SelfCheck] {int(results['passed'].sum())}/{len(results)} check superati")
    return results
