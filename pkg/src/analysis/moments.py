"""Momenti in forma chiusa di Q_u(A) e G_u(A) e oracolo Monte Carlo a DP troncato."""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial.legendre import leggauss
from scipy.stats import norm

from src.models.sticks import log_dirichlet
from src.prior.base_measure import BaseMeasure
from src.utils.config import MC_BATCH, MC_REPLICATES, MC_TRUNCATION
from src.utils.errors import ParameterError

logger = logging.getLogger(__name__)

SE_BATCHES = 20

# nodi e pesi di Gauss–Legendre su [0, 2] (x = 1 + nodi su [−1, 1])
_GAUSS_LEGENDRE = {n: (1.0 + x, w) for n, (x, w) in ((n, leggauss(n)) for n in (6, 12, 20))}


@dataclass(frozen=True)
class EventRect:
    """
    Evento A = (lo, hi) per la coordinata φ_u di un atomo.

    Attributes:
        slot: Slot u
        lo: Estremo inferiore (può essere −inf)
        hi: Estremo superiore (può essere +inf)
    """
    slot: int
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParameterError(f"Evento non valido: lo={self.lo!r} >= hi={self.hi!r}")

    def contains(self, values: np.ndarray) -> np.ndarray:
        return (values > self.lo) & (values < self.hi)


def g_of(c: float) -> float:
    """g(c) = 1 / (c + 1)."""
    if not c > 0:
        raise ParameterError(f"g richiede un argomento positivo, trovato {c!r}")
    return 1.0 / (c + 1.0)


def bvn_upper(h: float, k: float, rho: float) -> float:
    """
    P(X > h, Y > k) per una normale bivariata standard con correlazione rho.

    Metodo di Drezner e Wesolowsky nella formulazione di Genz:
    quadratura di Gauss–Legendre a 6, 12 o 20 nodi a seconda di |rho|,
    con espansione asintotica per |rho| ≥ 0.925. Errore assoluto ≈ 1e-15.
    """
    rho = float(np.clip(rho, -1.0, 1.0))
    if np.isposinf(h) or np.isposinf(k):
        return 0.0
    if np.isneginf(h):
        return 1.0 if np.isneginf(k) else float(norm.cdf(-k))
    if np.isneginf(k):
        return float(norm.cdf(-h))
    if rho == 0:
        return float(norm.cdf(-h) * norm.cdf(-k))

    two_pi = 2.0 * np.pi
    hk = h * k
    n = 6 if abs(rho) < 0.3 else 12 if abs(rho) < 0.75 else 20
    x, w = _GAUSS_LEGENDRE[n]
    # la quadratura su [0, 2] conta due volte la metà dell'intervallo
    w = 0.5 * w

    if abs(rho) < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * np.arcsin(rho)
        sn = np.sin(asr * x)
        bvn = np.dot(w, np.exp((sn * hk - hs) / (1.0 - sn ** 2)))
        return float(np.clip(bvn * asr / two_pi + norm.cdf(-h) * norm.cdf(-k), 0.0, 1.0))

    bvn = 0.0
    if rho < 0:
        k = -k
        hk = -hk
    if abs(rho) < 1:
        ass = 1.0 - rho ** 2
        a = np.sqrt(ass)
        bs = (h - k) ** 2
        asr = -0.5 * (bs / ass + hk)
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        if asr > -100:
            bvn = a * np.exp(asr) * (1.0 - c * (bs - ass) * (1.0 - d * bs) / 3.0 + c * d * ass ** 2)
        if hk > -100:
            b = np.sqrt(bs)
            sp = np.sqrt(two_pi) * norm.cdf(-b / a)
            bvn -= np.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
        a = 0.5 * a
        xs = (a * x) ** 2
        asr = -0.5 * (bs / xs + hk)
        keep = asr > -100
        xs = xs[keep]
        sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
        rs = np.sqrt(1.0 - xs)
        ep = np.exp(-0.5 * hk * xs / (1.0 + rs) ** 2) / rs
        bvn = (a * np.dot(np.exp(asr[keep]) * (sp - ep), w[keep]) - bvn) / two_pi
    if rho > 0:
        bvn += norm.cdf(-max(h, k))
    elif h >= k:
        bvn = -bvn
    else:
        span = norm.cdf(k) - norm.cdf(h) if h < 0 else norm.cdf(-h) - norm.cdf(-k)
        bvn = span - bvn
    return float(np.clip(bvn, 0.0, 1.0))


def bvn_rectangle(lo1: float, hi1: float, lo2: float, hi2: float, rho: float) -> float:
    """P(lo1 < X < hi1, lo2 < Y < hi2) per la normale bivariata standard."""
    p = bvn_upper(lo1, lo2, rho) - bvn_upper(hi1, lo2, rho) - bvn_upper(lo1, hi2, rho) + bvn_upper(hi1, hi2, rho)
    return float(np.clip(p, 0.0, 1.0))


def h_u(H: BaseMeasure, A: EventRect) -> float:
    """H_u(A) = P(φ_u ∈ A) sotto H."""
    mu, var = H.marginal_slot(A.slot)
    sd = np.sqrt(var)
    return float(norm.cdf((A.hi - mu) / sd) - norm.cdf((A.lo - mu) / sd))


def h_uv(H: BaseMeasure, A: EventRect, B: EventRect) -> float:
    """H_uv(A, B) = P(φ_u ∈ A, φ_v ∈ B) sotto H."""
    mu_u, var_u = H.marginal_slot(A.slot)
    mu_v, var_v = H.marginal_slot(B.slot)
    cov = H.covariance()[A.slot, B.slot]
    rho = cov / np.sqrt(var_u * var_v)
    if A.slot == B.slot or rho >= 1.0:
        # stessa variabile standardizzata: probabilità dell'intersezione
        lo = max((A.lo - mu_u) / np.sqrt(var_u), (B.lo - mu_v) / np.sqrt(var_v))
        hi = min((A.hi - mu_u) / np.sqrt(var_u), (B.hi - mu_v) / np.sqrt(var_v))
        return float(max(0.0, norm.cdf(hi) - norm.cdf(lo)))
    su, sv = np.sqrt(var_u), np.sqrt(var_v)
    return bvn_rectangle((A.lo - mu_u) / su, (A.hi - mu_u) / su, (B.lo - mu_v) / sv, (B.hi - mu_v) / sv, rho)


def var_Q(H: BaseMeasure, gamma: float, A: EventRect) -> float:
    p = h_u(H, A)
    return g_of(gamma) * (p - p * p)


def cov_Q(H: BaseMeasure, gamma: float, A: EventRect, B: EventRect) -> float:
    """Cov(Q_u(A), Q_v(B)) = g(γ)(H_uv(A, B) − H_u(A)H_v(B))."""
    return g_of(gamma) * (h_uv(H, A, B) - h_u(H, A) * h_u(H, B))


def corr_Q(H: BaseMeasure, gamma: float, A: EventRect, B: EventRect) -> float:
    """
    Corr(Q_u(A), Q_v(B)); non dipende da γ.

    Raises:
        ParameterError: Se H_u(A) o H_v(B) valgono 0 o 1 (correlazione indefinita)
    """
    g_of(gamma)
    pa, pb = h_u(H, A), h_u(H, B)
    denom = (pa - pa * pa) * (pb - pb * pb)
    if not denom > 0:
        raise ParameterError(f"Correlazione indefinita: H_u(A)={pa!r}, H_v(B)={pb!r}")
    return float((h_uv(H, A, B) - pa * pb) / np.sqrt(denom))


def _local_factor(gamma: float, alpha: float) -> float:
    gg, ga = g_of(gamma), g_of(alpha)
    return gg + ga - gg * ga


def var_G(H: BaseMeasure, gamma: float, alpha_u: float, A: EventRect) -> float:
    """Var(G_u(A)) = (g(γ) + g(α_u) − g(γ)g(α_u))(H_u(A) − H_u(A)²)."""
    p = h_u(H, A)
    return _local_factor(gamma, alpha_u) * (p - p * p)


def corr_G(H: BaseMeasure, gamma: float, alpha_u: float, alpha_v: float, A: EventRect, B: EventRect) -> float:
    """Corr(G_u(A), G_v(B)) per u ≠ v: g(γ)·Corr(Q) sul prodotto dei fattori locali."""
    scale = g_of(gamma) / np.sqrt(_local_factor(gamma, alpha_u) * _local_factor(gamma, alpha_v))
    return float(scale * corr_Q(H, gamma, A, B))


def closed_form_moments(H: BaseMeasure, gamma: float, alpha: Tuple[float, float], A: EventRect, B: EventRect) -> Dict[str, float]:
    """Tutti i momenti in forma chiusa confrontabili con mc_truncated."""
    return {
        "E_G_u": h_u(H, A),
        "var_Q_u": var_Q(H, gamma, A),
        "cov_Q": cov_Q(H, gamma, A, B),
        "corr_Q": corr_Q(H, gamma, A, B),
        "var_G_u": var_G(H, gamma, alpha[0], A),
        "corr_G": corr_G(H, gamma, alpha[0], alpha[1], A, B),
    }


def _slot_sampler(H: BaseMeasure, slots: Tuple[int, int]):
    """Radice (anche semidefinita) della covarianza ristretta agli slot richiesti."""
    idx = np.asarray(slots)
    cov = H.covariance()[np.ix_(idx, idx)]
    vals, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return H.mean[idx], root


def _statistics(x: np.ndarray, y: np.ndarray, gu: np.ndarray, gv: np.ndarray) -> Dict[str, float]:
    def corr(a, b):
        sa, sb = a.std(), b.std()
        return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb)) if sa > 0 and sb > 0 else float("nan")

    return {
        "E_G_u": float(gu.mean()),
        "var_Q_u": float(x.var()),
        "cov_Q": float(np.mean((x - x.mean()) * (y - y.mean()))),
        "corr_Q": corr(x, y),
        "var_G_u": float(gu.var()),
        "corr_G": corr(gu, gv),
    }


def mc_truncated(
    H: BaseMeasure,
    gamma: float,
    alpha: Tuple[float, float],
    events: Tuple[EventRect, EventRect],
    rng: np.random.Generator,
    L: int = MC_TRUNCATION,
    R: int = MC_REPLICATES,
    batch: int = MC_BATCH,
) -> pd.DataFrame:
    """
    Stima Monte Carlo dei momenti con il DP troncato Q^L = Σ β_k δ_{φ_k}, β ~ Dir(γ/L, ..., γ/L).

    Ogni replica estrae L atomi da H, i pesi β e, per i due slot degli
    eventi, π_u, π_v ~ Dir(α β) indipendenti. Gli errori standard sono
    stimati con le medie per lotti (SE_BATCHES lotti).

    Args:
        H: Base measure
        gamma: Concentrazione globale γ
        alpha: Coppia (α_u, α_v)
        events: Eventi (A allo slot u, B allo slot v)
        rng: Generatore numpy
        L: Troncatura
        R: Numero di repliche
        batch: Repliche per blocco di simulazione

    Returns:
        DataFrame con colonne quantity, estimate, se

    Raises:
        ParameterError: Se L < 2 o R < 100
    """
    if L < 2:
        raise ParameterError(f"Troncatura L={L} non valida, serve L >= 2")
    if R < 100:
        raise ParameterError(f"Repliche R={R} insufficienti, servono almeno 100")
    g_of(gamma)
    A, B = events
    mean, root = _slot_sampler(H, (A.slot, B.slot))
    x = np.empty(R)
    y = np.empty(R)
    gu = np.empty(R)
    gv = np.empty(R)
    logger.info(f"[Moments] Monte Carlo troncato: L={L}, R={R}, γ={gamma}, α={alpha}")
    for start in range(0, R, batch):
        n = min(batch, R - start)
        phi = mean + rng.standard_normal((n, L, 2)) @ root.T
        in_a = A.contains(phi[..., 0]).astype(float)
        in_b = B.contains(phi[..., 1]).astype(float)
        log_beta = log_dirichlet(np.full(L, gamma / L), rng, size=n)
        beta = np.exp(log_beta)
        x[start:start + n] = (beta * in_a).sum(axis=1)
        y[start:start + n] = (beta * in_b).sum(axis=1)
        # α β può sottoflussare: il parametro minimo è tenuto positivo
        params_u = np.maximum(alpha[0] * beta, np.finfo(float).tiny)
        params_v = np.maximum(alpha[1] * beta, np.finfo(float).tiny)
        gu[start:start + n] = (np.exp(log_dirichlet(params_u, rng)) * in_a).sum(axis=1)
        gv[start:start + n] = (np.exp(log_dirichlet(params_v, rng)) * in_b).sum(axis=1)

    overall = _statistics(x, y, gu, gv)
    n_batches = min(SE_BATCHES, R)
    parts = [
        _statistics(x[idx], y[idx], gu[idx], gv[idx])
        for idx in np.array_split(np.arange(R), n_batches)
    ]
    rows = []
    for key, value in overall.items():
        per_batch = np.array([p[key] for p in parts])
        se = float(np.nanstd(per_batch, ddof=1) / np.sqrt(np.sum(np.isfinite(per_batch))))
        rows.append({"quantity": key, "estimate": value, "se": se})
    return pd.DataFrame(rows)


def compare_moments(
    H: BaseMeasure,
    gamma: float,
    alpha: Tuple[float, float],
    events: Tuple[EventRect, EventRect],
    rng: Optional[np.random.Generator] = None,
    L: int = MC_TRUNCATION,
    R: int = MC_REPLICATES,
) -> pd.DataFrame:
    """Tabella forma chiusa vs Monte Carlo con lo scarto in unità di SE."""
    rng = rng or np.random.default_rng(0)
    closed = closed_form_moments(H, gamma, alpha, *events)
    mc = mc_truncated(H, gamma, alpha, events, rng, L=L, R=R)
    mc["closed_form"] = mc["quantity"].map(closed)
    mc["z_score"] = (mc["estimate"] - mc["closed_form"]) / mc["se"]
    return mc[["quantity", "closed_form", "estimate", "se", "z_score"]]
