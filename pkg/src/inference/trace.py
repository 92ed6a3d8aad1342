"""Scrittura e lettura delle tracce per catena in formato CSV."""

import logging
import os
from typing import List

import numpy as np
import pandas as pd

from src.models.state import TraceRecord
from src.utils.config import FLOAT_FORMAT
from src.utils.errors import DataError

logger = logging.getLogger(__name__)

SCALARS_FILENAME = "scalars.csv"
Z_FILENAME = "z.csv"
ATOMS_FILENAME = "atoms.csv"
FLUSH_EVERY = 500


class TraceWriter:
    """
    Accumula i TraceRecord e li scrive su tre CSV nella directory della catena.

    - scalars.csv: sweep, K, gamma, sigma_eps2, beta_new, kernel_sigma2, kernel_omega, alpha_0..alpha_{M-1}
    - z.csv: sweep, z_0..z_{N-1}
    - atoms.csv: sweep, cluster, beta, phi_0..phi_{M-1}
    """

    def __init__(self, chain_dir: str, M: int, N: int):
        self.chain_dir = chain_dir
        self.M = M
        self.N = N
        self._buffer: List[TraceRecord] = []
        self._written = 0
        os.makedirs(chain_dir, exist_ok=True)
        for name in (SCALARS_FILENAME, Z_FILENAME, ATOMS_FILENAME):
            path = os.path.join(chain_dir, name)
            if os.path.exists(path):
                os.remove(path)

    def append(self, record: TraceRecord):
        self._buffer.append(record)
        if len(self._buffer) >= FLUSH_EVERY:
            self.flush()

    def _frames(self):
        scalars, z_rows, atom_rows = [], [], []
        for r in self._buffer:
            row = {
                "sweep": r.sweep,
                "K": r.K,
                "gamma": r.gamma,
                "sigma_eps2": r.sigma_eps2,
                "beta_new": r.beta[-1],
                "kernel_sigma2": r.kernel[0],
                "kernel_omega": r.kernel[1],
            }
            row.update({f"alpha_{u}": a for u, a in enumerate(r.alpha)})
            scalars.append(row)
            z_rows.append(np.concatenate(([r.sweep], r.z)))
            for k in range(r.K):
                atom_rows.append([r.sweep, k, r.beta[k], *r.atoms[k]])
        scalars_df = pd.DataFrame(scalars)
        z_df = pd.DataFrame(np.asarray(z_rows, dtype=int).reshape(len(z_rows), self.N + 1),
                            columns=["sweep"] + [f"z_{i}" for i in range(self.N)])
        atoms_df = pd.DataFrame(atom_rows, columns=["sweep", "cluster", "beta"] + [f"phi_{u}" for u in range(self.M)])
        atoms_df["sweep"] = atoms_df["sweep"].astype(int)
        atoms_df["cluster"] = atoms_df["cluster"].astype(int)
        return scalars_df, z_df, atoms_df

    def flush(self):
        if not self._buffer:
            return
        header = self._written == 0
        for df, name in zip(self._frames(), (SCALARS_FILENAME, Z_FILENAME, ATOMS_FILENAME)):
            df.to_csv(os.path.join(self.chain_dir, name), mode="a", header=header, index=False, float_format=FLOAT_FORMAT)
        self._written += len(self._buffer)
        logger.debug(f"[TraceWriter] {self._written} record scritti in {self.chain_dir}")
        self._buffer = []

    def close(self):
        self.flush()


def read_trace(chain_dir: str) -> List[TraceRecord]:
    """
    Ricostruisce i TraceRecord di una catena.

    Raises:
        DataError: Se i file di traccia mancano o sono incoerenti
    """
    paths = [os.path.join(chain_dir, name) for name in (SCALARS_FILENAME, Z_FILENAME, ATOMS_FILENAME)]
    for path in paths:
        if not os.path.exists(path):
            raise DataError(f"File di traccia {path} non trovato")
    scalars = pd.read_csv(paths[0])
    z_df = pd.read_csv(paths[1])
    atoms_df = pd.read_csv(paths[2])
    if len(scalars) != len(z_df):
        raise DataError(f"Traccia {chain_dir}: {len(scalars)} righe scalari ma {len(z_df)} righe di z")
    alpha_cols = [c for c in scalars.columns if c.startswith("alpha_")]
    phi_cols = [c for c in atoms_df.columns if c.startswith("phi_")]
    z_cols = [c for c in z_df.columns if c.startswith("z_")]
    atoms_by_sweep = {int(s): g.sort_values("cluster") for s, g in atoms_df.groupby("sweep")}
    z_values = z_df[z_cols].to_numpy(dtype=int)
    alpha_values = scalars[alpha_cols].to_numpy(dtype=float)
    records = []
    for idx, row in enumerate(scalars.itertuples(index=False)):
        sweep = int(row.sweep)
        K = int(row.K)
        group = atoms_by_sweep.get(sweep)
        atoms = group[phi_cols].to_numpy(dtype=float) if group is not None else np.zeros((0, len(phi_cols)))
        betas = group["beta"].to_numpy(dtype=float) if group is not None else np.zeros(0)
        if atoms.shape[0] != K:
            raise DataError(f"Traccia {chain_dir}: sweep {sweep} con K={K} ma {atoms.shape[0]} atomi")
        records.append(TraceRecord(
            sweep=sweep,
            gamma=float(row.gamma),
            alpha=alpha_values[idx],
            sigma_eps2=float(row.sigma_eps2),
            z=z_values[idx],
            atoms=atoms,
            beta=np.append(betas, float(row.beta_new)),
            kernel=(float(row.kernel_sigma2), float(row.kernel_omega)),
        ))
    logger.info(f"[TraceReader] {len(records)} record letti da {chain_dir}")
    return records
