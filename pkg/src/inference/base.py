"""Parti comuni ai due sampler: dati appiattiti, iperparametri, controllo dei conteggi."""

import logging
from typing import Callable, Optional

import numpy as np

from src.inference.hyperparams import KernelMH, sample_alpha, sample_gamma, sample_sigma_eps
from src.models.dataset import GroupedDataset
from src.models.state import CountStats, HyperParams, TraceRecord
from src.prior.base_measure import BaseMeasure
from src.prior.combinatorics import StirlingTable
from src.utils.errors import CorruptionError, NumericalError

logger = logging.getLogger(__name__)


def sample_log_categorical(logw: np.ndarray, rng: np.random.Generator) -> int:
    """
    Estrae un indice con probabilità ∝ exp(logw) tramite CDF inversa.

    Raises:
        NumericalError: Se tutti i pesi sono nulli o non finiti
    """
    top = np.max(logw)
    if not np.isfinite(top):
        raise NumericalError("Pesi di campionamento tutti nulli")
    cdf = np.cumsum(np.exp(logw - top))
    idx = int(np.searchsorted(cdf, rng.uniform() * cdf[-1], side="right"))
    return min(idx, len(logw) - 1)


class GibbsSampler:
    """
    Base dei sampler nHDP.

    Le osservazioni sono appiattite gruppo per gruppo nell'ordine del file;
    questo è anche l'ordine di scansione. Gli stream-id non vengono letti.

    Args:
        data: Dataset raggruppato
        H: Base measure
        hyper: Iperparametri iniziali (copiati)
        rng: Generatore numpy della catena
        check_counts: Se True ricalcola i conteggi da zero dopo ogni sotto-passo
        kernel_mh: MH opzionale sui parametri del kernel
    """

    name = "GibbsSampler"

    def __init__(
        self,
        data: GroupedDataset,
        H: BaseMeasure,
        hyper: HyperParams,
        rng: np.random.Generator,
        check_counts: bool = False,
        kernel_mh: Optional[KernelMH] = None,
        stirling: Optional[StirlingTable] = None,
    ):
        self.M = data.M
        self.groups = data.flat_groups()
        self.values = data.flat_values()
        self.N = len(self.values)
        self.n_u = np.asarray(data.group_sizes, dtype=int)
        self.H = H
        self.hyper = hyper.copy()
        if len(self.hyper.alpha) != self.M:
            self.hyper.alpha = np.full(self.M, float(self.hyper.alpha[0]))
        self.rng = rng
        self.check = check_counts
        self.kernel_mh = kernel_mh
        self.stirling = stirling or StirlingTable()

    def counts(self) -> CountStats:
        raise NotImplementedError

    def recompute(self) -> CountStats:
        raise NotImplementedError

    def check_counts(self, where: str):
        """
        Confronta i conteggi incrementali con quelli ricalcolati.

        Raises:
            CorruptionError: Se i conteggi divergono
        """
        oracle = self.recompute()
        current = self.counts()
        if not current.matches(oracle):
            raise CorruptionError(f"[{self.name}] Conteggi incrementali divergenti dopo {where}")

    def _maybe_check(self, where: str):
        if self.check:
            self.check_counts(where)

    def update_hyperparameters(self, K: int, q_total: int, m_u: np.ndarray, residuals: np.ndarray, atoms: np.ndarray) -> bool:
        """
        Aggiorna γ, α_u, σ_ε² e, se attivo, il kernel di H.

        Returns:
            True se σ_ε² o H sono cambiati (le predittive in cache vanno invalidate)
        """
        hyper = self.hyper
        if hyper.resample_gamma:
            hyper.gamma = sample_gamma(hyper, K, q_total, self.rng)
        if hyper.resample_alpha:
            hyper.alpha = sample_alpha(hyper, self.n_u, m_u, self.rng)
        changed = False
        if hyper.resample_sigma_eps:
            hyper.sigma_eps2 = sample_sigma_eps(hyper, residuals, self.rng)
            changed = True
        if self.kernel_mh is not None and len(atoms):
            new_H = self.kernel_mh.step_kernel(self.H, atoms, self.rng)
            if new_H is not self.H:
                self.H = new_H
                changed = True
        return changed

    def sweep(self, sweep_index: int) -> TraceRecord:
        raise NotImplementedError

    def run(self, sweeps: int, callback: Optional[Callable[[TraceRecord], None]] = None, log_every: int = 100):
        """
        Esegue `sweeps` sweep chiamando `callback` su ogni TraceRecord.
        """
        for s in range(1, sweeps + 1):
            record = self.sweep(s)
            if callback is not None:
                callback(record)
            if log_every and s % log_every == 0:
                logger.info(
                    f"[{self.name}] Sweep {s}/{sweeps}: K={record.K}, γ={record.gamma:.4g}, "
                    f"α={record.alpha[0]:.4g}, σ_ε²={record.sigma_eps2:.4g}"
                )
