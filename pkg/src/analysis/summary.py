"""Riassunti della posterior a partire dalle tracce: K globale, K locale, curve degli atomi, co-clustering, predittiva."""

import glob
import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

from src.inference.engines import build_base_measure
from src.inference.trace import read_trace
from src.models.dataset import CovariateGrid, GroupedDataset
from src.models.run_config import RunConfig
from src.models.state import TraceRecord
from src.prior.conjugate import predictive_new
from src.utils.config import (
    ALIGNMENT_MIN_OVERLAP,
    CREDIBLE_QUANTILES,
    DATA_FILENAME,
    GRID_FILENAME,
    MANIFEST_FILENAME,
    SUMMARY_BURNIN_FRACTION,
    SUMMARY_THIN,
)
from src.utils.errors import DataError, ParameterError, UnsupportedOperationError

logger = logging.getLogger(__name__)

ALIGNMENTS = ["overlap", "mean"]


def canonical_labels(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rietichetta le componenti per ordine di prima apparizione in z.

    Returns:
        Coppia (z rietichettato, order) con order[j] = etichetta originale della nuova j
    """
    order, first = np.unique(z, return_index=True)
    order = order[np.argsort(first)]
    relabel = np.empty(int(z.max()) + 1 if len(z) else 0, dtype=int)
    relabel[order] = np.arange(len(order))
    return relabel[z], order


@dataclass
class TraceSet:
    """
    Record post burn-in e diradati di una o più catene, con dati e configurazione del fit.

    Attributes:
        records: TraceRecord tenuti
        chain_ids: Catena di provenienza di ogni record
        data: Dataset del fit (stream-id compresi, se presenti)
        config: Configurazione del fit (per ricostruire H)
    """
    records: List[TraceRecord]
    data: GroupedDataset
    config: RunConfig = field(default_factory=RunConfig)
    chain_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.records:
            raise DataError("TraceSet vuoto: nessun record dopo burn-in e diradamento")
        if self.chain_ids is None:
            self.chain_ids = np.zeros(len(self.records), dtype=int)
        for r in self.records:
            if len(r.z) != self.data.N:
                raise DataError(f"Record della sweep {r.sweep} con {len(r.z)} assegnazioni, attese {self.data.N}")
            if r.atoms.shape[1] != self.data.M:
                raise DataError(f"Record della sweep {r.sweep} con atomi su {r.atoms.shape[1]} slot, attesi {self.data.M}")
        self.groups = self.data.flat_groups()

    def __len__(self) -> int:
        return len(self.records)

    @property
    def M(self) -> int:
        return self.data.M

    @staticmethod
    def select(records: List[TraceRecord], total_sweeps: int, burnin_fraction: float, thin: int) -> List[TraceRecord]:
        """Scarta le sweep <= burnin_fraction · total_sweeps e tiene un record ogni `thin`."""
        if not 0 <= burnin_fraction < 1:
            raise ParameterError(f"Frazione di burn-in {burnin_fraction!r} fuori da [0, 1)")
        if thin < 1:
            raise ParameterError(f"Diradamento {thin!r} non valido, serve >= 1")
        cutoff = burnin_fraction * total_sweeps
        kept = [r for r in records if r.sweep > cutoff]
        return kept[::thin]

    @classmethod
    def from_records(
        cls,
        records: List[TraceRecord],
        data: GroupedDataset,
        config: Optional[RunConfig] = None,
        burnin_fraction: float = 0.0,
        thin: int = 1,
    ) -> "TraceSet":
        total = max((r.sweep for r in records), default=0)
        return cls(records=cls.select(records, total, burnin_fraction, thin), data=data, config=config or RunConfig())

    @classmethod
    def load(cls, trace_dir: str, burnin_fraction: float = SUMMARY_BURNIN_FRACTION, thin: int = SUMMARY_THIN) -> "TraceSet":
        """
        Carica tutte le catene `chain_<c>` di una directory di fit.

        Il burn-in è una frazione delle sweep totali del fit: le sweep già
        escluse dal fit contano come scartate.

        Args:
            trace_dir: Directory di output di `fit`
            burnin_fraction: Frazione delle sweep da scartare
            thin: Tiene un record ogni `thin`

        Returns:
            TraceSet con le catene unite

        Raises:
            DataError: Se mancano manifest, griglia, dati o catene
        """
        manifest_path = os.path.join(trace_dir, MANIFEST_FILENAME)
        if not os.path.exists(manifest_path):
            raise DataError(f"Manifest {manifest_path} non trovato: {trace_dir} non è una directory di fit")
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        config = RunConfig.from_dict(manifest.get("config", {}))
        grid = CovariateGrid.from_csv(os.path.join(trace_dir, GRID_FILENAME))
        data = GroupedDataset.from_csv(os.path.join(trace_dir, DATA_FILENAME), grid)

        chain_dirs = sorted(
            glob.glob(os.path.join(trace_dir, "chain_*")),
            key=lambda p: int(re.sub(r"\D", "", os.path.basename(p)) or 0),
        )
        if not chain_dirs:
            raise DataError(f"Nessuna catena trovata in {trace_dir}")
        records, chain_ids = [], []
        for c, chain_dir in enumerate(chain_dirs):
            kept = cls.select(read_trace(chain_dir), config.sweeps, burnin_fraction, thin)
            records.extend(kept)
            chain_ids.extend([c] * len(kept))
        logger.info(f"[Summary] {len(records)} record da {len(chain_dirs)} catene (burn-in {burnin_fraction:.0%}, thin {thin})")
        return cls(records=records, data=data, config=config, chain_ids=np.asarray(chain_ids, dtype=int))


def _probability_table(values: Sequence[int], column: str) -> pd.DataFrame:
    counts = pd.Series(values).value_counts().sort_index()
    return pd.DataFrame({column: counts.index.astype(int), "probability": counts.to_numpy() / counts.sum()})


def occupied_count(record: TraceRecord) -> int:
    return int(len(np.unique(record.z)))


def k_posterior(traces: TraceSet) -> pd.DataFrame:
    """Distribuzione empirica del numero di componenti occupate (colonne K, probability)."""
    return _probability_table([occupied_count(r) for r in traces.records], "K")


def mode_k(traces: TraceSet) -> int:
    table = k_posterior(traces)
    return int(table.loc[table["probability"].idxmax(), "K"])


def local_k_posterior(traces: TraceSet, u: int) -> pd.DataFrame:
    """
    Distribuzione empirica del numero di cluster locali allo slot u.

    Raises:
        ParameterError: Se u è fuori dalla griglia
    """
    if not 0 <= u < traces.M:
        raise ParameterError(f"Slot {u} fuori dalla griglia (M={traces.M})")
    mask = traces.groups == u
    counts = [int(len(np.unique(r.z[mask]))) for r in traces.records]
    return _probability_table(counts, "count")


def local_k_table(traces: TraceSet) -> pd.DataFrame:
    """local_k_posterior per tutti gli slot (colonne slot, count, probability)."""
    frames = []
    for u in range(traces.M):
        table = local_k_posterior(traces, u)
        table.insert(0, "slot", u)
        frames.append(table)
    return pd.concat(frames, ignore_index=True)


@dataclass
class AtomCurves:
    """
    Curve medie degli atomi allineati con bande puntuali.

    Attributes:
        table: DataFrame (slot, cluster, mean, sd, q05, q95, band)
        mode_K: K modale su cui si è allineato
        n_records: Record con K = mode_K usati
        alignment: Politica effettivamente usata
        mean_overlap: Frazione media di osservazioni concordi con il riferimento
    """
    table: pd.DataFrame
    mode_K: int
    n_records: int
    alignment: str
    mean_overlap: float

    def means(self) -> np.ndarray:
        """Array (mode_K, M) delle curve medie."""
        pivot = self.table.pivot(index="cluster", columns="slot", values="mean")
        return pivot.to_numpy()

    def sds(self) -> np.ndarray:
        pivot = self.table.pivot(index="cluster", columns="slot", values="sd")
        return pivot.to_numpy()


def greedy_match(overlap: np.ndarray) -> np.ndarray:
    """
    Abbinamento greedy riga → colonna per overlap decrescente.

    A parità di overlap vince l'indice di riga più piccolo, poi quello di colonna.

    Returns:
        match[a] = colonna assegnata alla riga a
    """
    K = overlap.shape[0]
    match = np.full(K, -1, dtype=int)
    free_rows = np.ones(K, dtype=bool)
    free_cols = np.ones(K, dtype=bool)
    for _ in range(K):
        masked = np.where(free_rows[:, None] & free_cols[None, :], overlap, -1)
        a, b = np.unravel_index(np.argmax(masked), masked.shape)
        match[a] = b
        free_rows[a] = False
        free_cols[b] = False
    return match


def _canonical_atoms(record: TraceRecord) -> Tuple[np.ndarray, np.ndarray]:
    z, order = canonical_labels(record.z)
    return z, record.atoms[order]


def atom_curves(traces: TraceSet, alignment: str = "overlap") -> AtomCurves:
    """
    Allinea le componenti tra i record con K modale e calcola media e quantili per slot.

    Con `overlap` ogni record è allineato al primo record con K modale
    massimizzando in modo greedy le osservazioni condivise dalle partizioni.
    Se l'overlap medio resta sotto ALIGNMENT_MIN_OVERLAP l'allineamento è
    considerato instabile e si ripiega su `mean`: componenti ordinate per
    valore medio dell'atomo sugli slot.

    Raises:
        ParameterError: Se la politica di allineamento è sconosciuta
    """
    if alignment not in ALIGNMENTS:
        raise ParameterError(f"Allineamento sconosciuto: {alignment!r} (disponibili: {ALIGNMENTS})")
    K = mode_k(traces)
    subset = [_canonical_atoms(r) for r in traces.records if occupied_count(r) == K]
    N = traces.data.N
    used = alignment
    mean_overlap = float("nan")

    aligned = None
    if alignment == "overlap":
        ref_z = subset[0][0]
        stacked, fractions = [], []
        for z, atoms in subset:
            overlap = np.zeros((K, K))
            np.add.at(overlap, (ref_z, z), 1.0)
            match = greedy_match(overlap)
            fractions.append(overlap[np.arange(K), match].sum() / N if N else 1.0)
            stacked.append(atoms[match])
        mean_overlap = float(np.mean(fractions))
        if mean_overlap >= ALIGNMENT_MIN_OVERLAP:
            aligned = np.stack(stacked)
        else:
            logger.warning(f"[Summary] Allineamento instabile (overlap medio {mean_overlap:.2f}), ordinamento per media degli atomi")
            used = "mean"
    if aligned is None:
        aligned = np.stack([atoms[np.argsort(atoms.mean(axis=1), kind="stable")] for _, atoms in subset])

    lo, hi = CREDIBLE_QUANTILES
    mean = aligned.mean(axis=0)
    sd = aligned.std(axis=0)
    q_lo = np.quantile(aligned, lo, axis=0)
    q_hi = np.quantile(aligned, hi, axis=0)
    rows = [
        {"slot": u, "cluster": k, "mean": mean[k, u], "sd": sd[k, u], "q05": q_lo[k, u], "q95": q_hi[k, u], "band": "pointwise"}
        for k in range(K)
        for u in range(traces.M)
    ]
    logger.info(f"[Summary] Curve degli atomi: K modale {K}, {len(subset)} record, allineamento {used}")
    return AtomCurves(table=pd.DataFrame(rows), mode_K=K, n_records=len(subset), alignment=used, mean_overlap=mean_overlap)


def coclustering(traces: TraceSet, interval: Tuple[int, int]) -> pd.DataFrame:
    """
    Probabilità a posteriori che due stream condividano il cluster locale, mediata sugli slot di interval.

    Per ogni slot conta la prima osservazione di ogni stream; le coppie di
    stream mai presenti insieme nell'intervallo restano NaN.

    Args:
        traces: TraceSet con dataset provvisto di stream-id
        interval: Slot iniziale e finale (inclusi)

    Returns:
        DataFrame simmetrico indicizzato dagli stream-id

    Raises:
        UnsupportedOperationError: Se il dataset non ha stream-id
        ParameterError: Se l'intervallo è fuori dalla griglia
    """
    data = traces.data
    if not data.has_streams:
        raise UnsupportedOperationError("Co-clustering non disponibile: il dataset non ha stream-id")
    start, end = interval
    if not 0 <= start <= end < traces.M:
        raise ParameterError(f"Intervallo {interval} non valido per M={traces.M}")
    streams = np.unique(np.concatenate(data.streams))
    S = len(streams)
    offsets = np.concatenate(([0], np.cumsum(data.group_sizes)))
    slots = range(start, end + 1)

    # idx[j, s] = indice piatto dell'osservazione dello stream s allo slot j (-1 se assente)
    idx = np.full((len(slots), S), -1, dtype=int)
    for j, u in enumerate(slots):
        pos, first = np.unique(np.searchsorted(streams, data.streams[u]), return_index=True)
        idx[j, pos] = offsets[u] + first
    present = idx >= 0
    both = (present[:, :, None] & present[:, None, :]).sum(axis=0).astype(float)

    same = np.zeros((S, S))
    for r in traces.records:
        labels = np.where(present, r.z[np.maximum(idx, 0)], -1)
        eq = (labels[:, :, None] == labels[:, None, :]) & present[:, :, None] & present[:, None, :]
        same += eq.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(both > 0, same / (both * len(traces)), np.nan)
    return pd.DataFrame(matrix, index=streams, columns=streams)


def predictive_density(traces: TraceSet, u: int, y_grid: np.ndarray) -> np.ndarray:
    """
    Densità predittiva di una nuova osservazione allo slot u, mediata sui record.

    Per ogni record: Σ_k E[π_uk] N(y; φ_uk, σ_ε²) + E[π_u,new] · predittiva a priori,
    con E[π_u] la media di Dirichlet di parametri α_u β_k + n_u·k e α_u β_new.
    """
    if not 0 <= u < traces.M:
        raise ParameterError(f"Slot {u} fuori dalla griglia (M={traces.M})")
    y_grid = np.asarray(y_grid, dtype=float)
    H = build_base_measure(traces.config, traces.data.grid)
    mask = traces.groups == u
    density = np.zeros_like(y_grid)
    for r in traces.records:
        H_r = H
        if np.all(np.isfinite(r.kernel)) and (r.kernel[0], r.kernel[1]) != (H.sigma2, H.omega):
            H_r = H.with_kernel(*r.kernel)
        counts = np.bincount(r.z[mask], minlength=r.K)[: r.K].astype(float)
        params = r.alpha[u] * np.asarray(r.beta, dtype=float)
        params[:-1] += counts
        weights = params / params.sum()
        sd = np.sqrt(r.sigma_eps2)
        existing = norm.pdf(y_grid[:, None], loc=r.atoms[:, u][None, :], scale=sd) @ weights[:-1]
        new = np.array([predictive_new(H_r, u, y, r.sigma_eps2) for y in y_grid])
        density += existing + weights[-1] * new
    return density / len(traces)


def predictive_table(traces: TraceSet, points: int = 200) -> pd.DataFrame:
    """predictive_density su una griglia regolare per ogni slot (colonne slot, y, density)."""
    values = traces.data.flat_values()
    if len(values) == 0:
        values = np.zeros(1)
    spread = values.std() or 1.0
    y_grid = np.linspace(values.min() - 3 * spread, values.max() + 3 * spread, points)
    frames = [pd.DataFrame({"slot": u, "y": y_grid, "density": predictive_density(traces, u, y_grid)}) for u in range(traces.M)]
    return pd.concat(frames, ignore_index=True)
