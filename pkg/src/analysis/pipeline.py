"""Pipeline di analisi: riassunto delle tracce, tabella dei momenti e studio di sensibilità su ω."""

import dataclasses
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.analysis.moments import EventRect, compare_moments
from src.analysis.summary import (
    TraceSet,
    atom_curves,
    coclustering,
    k_posterior,
    local_k_table,
    predictive_table,
)
from src.inference.pipeline import run_fit
from src.models.dataset import CovariateGrid
from src.models.run_config import RunConfig
from src.prior.base_measure import BaseMeasure
from src.utils.config import FLOAT_FORMAT, MC_REPLICATES, MC_TRUNCATION, SUMMARY_BURNIN_FRACTION, SUMMARY_THIN

logger = logging.getLogger(__name__)

COCLUSTER_SPAN = 4


def default_interval(M: int) -> Tuple[int, int]:
    """Ultimi COCLUSTER_SPAN slot della griglia."""
    return max(0, M - COCLUSTER_SPAN), M - 1


def run_summarize(
    trace_dir: str,
    out_dir: str,
    burnin_fraction: float = SUMMARY_BURNIN_FRACTION,
    thin: int = SUMMARY_THIN,
    interval: Optional[Tuple[int, int]] = None,
    alignment: str = "overlap",
) -> Dict[str, str]:
    """
    Scrive i riassunti della posterior di un fit.

    File prodotti in out_dir: k_posterior.csv, local_k_u.csv, atom_curves.csv,
    predictive_u.csv e, se il dataset ha stream-id, cocluster_<inizio>-<fine>.csv.

    Args:
        trace_dir: Directory di output di `fit`
        out_dir: Directory dei riassunti
        burnin_fraction: Frazione delle sweep da scartare
        thin: Diradamento dei record
        interval: Slot (inizio, fine) del co-clustering (default: ultimi 4)
        alignment: Politica di allineamento degli atomi

    Returns:
        Path dei file scritti
    """
    traces = TraceSet.load(trace_dir, burnin_fraction=burnin_fraction, thin=thin)
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def save(name: str, df: pd.DataFrame, index: bool = False):
        path = os.path.join(out_dir, name)
        df.to_csv(path, index=index, float_format=FLOAT_FORMAT)
        paths[name] = path

    k_table = k_posterior(traces)
    save("k_posterior.csv", k_table)
    save("local_k_u.csv", local_k_table(traces))
    curves = atom_curves(traces, alignment=alignment)
    save("atom_curves.csv", curves.table)
    save("predictive_u.csv", predictive_table(traces))
    if traces.data.has_streams:
        start, end = interval or default_interval(traces.M)
        save(f"cocluster_{start}-{end}.csv", coclustering(traces, (start, end)), index=True)
    else:
        logger.info("[Summary] Dataset senza stream-id: co-clustering non calcolato")

    best = k_table.loc[k_table["probability"].idxmax()]
    logger.info(f"[Summary] ✓ K modale {int(best['K'])} (p={best['probability']:.3f}); {len(paths)} file in {out_dir}")
    return paths


def run_moments(
    variant: str = "gp",
    sigma2: float = 1.0,
    omega: float = 0.05,
    distance: float = 1.0,
    gamma: float = 1.0,
    alpha: Tuple[float, float] = (1.0, 1.0),
    event: Tuple[float, float] = (-np.inf, 0.0),
    L: int = MC_TRUNCATION,
    R: int = MC_REPLICATES,
    seed: int = 0,
    out_path: Optional[str] = None,
) -> pd.DataFrame:
    """
    Confronta i momenti in forma chiusa con il Monte Carlo troncato su due slot a distanza `distance`.

    Lo stesso intervallo `event` è usato come A allo slot 0 e B allo slot 1.
    """
    grid = CovariateGrid(np.array([0.0, distance]))
    H = BaseMeasure(variant, grid, sigma2=sigma2, omega=omega)
    events = (EventRect(0, *event), EventRect(1, *event))
    table = compare_moments(H, gamma, alpha, events, rng=np.random.default_rng(seed), L=L, R=R)
    if out_path:
        os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
        table.to_csv(out_path, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"[Moments] ✓ Tabella salvata in {out_path}")
    return table


def run_sensitivity(
    config: RunConfig,
    omegas: Sequence[float],
    target_k: int,
    burnin_fraction: float = SUMMARY_BURNIN_FRACTION,
    thin: int = SUMMARY_THIN,
) -> pd.DataFrame:
    """
    Ripete il fit per ogni ω e riporta K modale e P(K = target_k).

    Ogni fit scrive in `<out>/omega_<ω>`; la tabella va in `<out>/sensitivity.csv`.
    """
    rows: List[Dict[str, float]] = []
    for omega in omegas:
        run_dir = os.path.join(config.out, f"omega_{omega:g}")
        cfg = dataclasses.replace(config, h_omega=float(omega), out=run_dir)
        cfg.validate()
        logger.info(f"[Sensitivity] Fit con ω={omega:g}")
        run_fit(cfg)
        table = k_posterior(TraceSet.load(run_dir, burnin_fraction=burnin_fraction, thin=thin))
        mode = int(table.loc[table["probability"].idxmax(), "K"])
        p_target = float(table.loc[table["K"] == target_k, "probability"].sum())
        rows.append({"omega": float(omega), "mode_K": mode, "p_target": p_target})
        logger.info(f"[Sensitivity] ω={omega:g}: K modale {mode}, P(K={target_k})={p_target:.3f}")
    result = pd.DataFrame(rows)
    os.makedirs(config.out, exist_ok=True)
    result.to_csv(os.path.join(config.out, "sensitivity.csv"), index=False, float_format=FLOAT_FORMAT)
    return result
