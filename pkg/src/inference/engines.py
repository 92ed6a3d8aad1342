"""Engine di una singola catena MCMC: costruzione di H, iperparametri e sampler da RunConfig."""

import logging
import os
from typing import Any, Dict, Optional

import numpy as np

from src.inference.base import GibbsSampler
from src.inference.conditional import ConditionalSampler
from src.inference.hyperparams import KernelMH
from src.inference.marginal import MarginalSampler
from src.inference.trace import TraceWriter
from src.models.dataset import CovariateGrid, GroupedDataset
from src.models.run_config import RunConfig
from src.models.state import HyperParams, TraceRecord
from src.prior.base_measure import BaseMeasure
from src.utils.errors import NHDPError

logger = logging.getLogger(__name__)


def build_base_measure(config: RunConfig, grid: CovariateGrid) -> BaseMeasure:
    """Base measure H descritta dalle chiavi `H.*` della configurazione."""
    return BaseMeasure(
        variant=config.h_variant,
        grid=grid,
        mean=config.h_mean,
        sigma2=config.h_sigma2,
        omega=config.h_omega,
        variances=np.asarray(config.h_variances) if config.h_variances is not None else None,
        jitter=config.h_jitter,
    )


def build_hyper(config: RunConfig, M: int) -> HyperParams:
    """Iperparametri iniziali, prior e flag di ricampionamento."""
    return HyperParams.build(
        M,
        gamma=config.gamma,
        alpha=config.alpha,
        sigma_eps2=config.sigma_eps2,
        gamma_prior=tuple(config.prior_gamma),
        alpha_prior=tuple(config.prior_alpha),
        sigma_eps_prior=tuple(config.prior_sigma_eps),
        resample_gamma=config.resample_gamma,
        resample_alpha=config.resample_alpha,
        resample_sigma_eps=config.resample_sigma_eps,
        alpha_shared=config.alpha_shared,
    )


class ChainEngine:
    """
    Esegue una catena: inizializzazione, sweep, scrittura della traccia.

    Le prime `burnin` sweep non vengono scritte; delle successive si
    scrive una ogni `trace.thin`.
    """

    def __init__(self, config: RunConfig, data: GroupedDataset, chain: int, seed: np.random.SeedSequence):
        self.config = config
        self.data = data.without_streams()
        self.chain = chain
        self.rng = np.random.default_rng(seed)
        self.H = build_base_measure(config, data.grid)
        self.hyper = build_hyper(config, data.M)
        logger.info(f"[ChainEngine] Catena {chain}: sampler={config.sampler}, H={config.h_variant}, N={data.N}, M={data.M}")

    def build_sampler(self) -> GibbsSampler:
        kernel_mh = None
        if self.config.h_resample:
            kernel_mh = KernelMH(tuple(self.config.prior_kernel_sigma2), tuple(self.config.prior_kernel_omega))
        common = dict(check_counts=self.config.debug_check_counts, kernel_mh=kernel_mh)
        if self.config.sampler == "conditional":
            return ConditionalSampler(self.data, self.H, self.hyper, self.rng, atom_update=self.config.h_atom_update, **common)
        return MarginalSampler(self.data, self.H, self.hyper, self.rng, **common)

    def run(self, chain_dir: Optional[str] = None) -> Dict[str, Any]:
        """
        Esegue la catena e, se chain_dir è dato, scrive la traccia.

        Returns:
            Riepilogo della catena (record scritti, K finale, tasso di accettazione MH)
        """
        cfg = self.config
        sampler = self.build_sampler()
        sampler.initialize(init=cfg.init, init_k=cfg.init_k)
        writer = TraceWriter(chain_dir, self.data.M, self.data.N) if chain_dir else None
        records = []
        kept = 0

        def on_record(record: TraceRecord):
            nonlocal kept
            if record.sweep <= cfg.burnin or (record.sweep - cfg.burnin) % cfg.trace_thin != 0:
                return
            kept += 1
            if writer is not None:
                writer.append(record)
            else:
                records.append(record)

        try:
            sampler.run(cfg.sweeps, callback=on_record, log_every=cfg.log_every)
        except NHDPError as e:
            logger.error(f"[ChainEngine] ✗ Catena {self.chain} interrotta: {e}")
            raise
        finally:
            if writer is not None:
                writer.close()
        summary = {
            "chain": self.chain,
            "records": kept,
            "final_K": int(sampler.state.K),
            "kernel_acceptance": sampler.kernel_mh.acceptance_rate if sampler.kernel_mh else None,
        }
        if writer is None:
            summary["trace"] = records
        logger.info(f"[ChainEngine] ✓ Catena {self.chain} completata: {kept} record, K finale={summary['final_K']}")
        return summary


def run_chain(config: RunConfig, data: GroupedDataset, chain: int, seed: np.random.SeedSequence, out_dir: Optional[str]) -> Dict[str, Any]:
    """Wrapper usato dai worker joblib."""
    chain_dir = os.path.join(out_dir, f"chain_{chain}") if out_dir else None
    return ChainEngine(config, data, chain, seed).run(chain_dir)
