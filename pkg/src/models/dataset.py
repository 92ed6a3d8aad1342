"""Modelli dati per la griglia delle covariate e i dati raggruppati per locazione."""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Dict, Any

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from src.utils.config import FLOAT_FORMAT
from src.utils.errors import DataError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CovariateGrid:
    """
    Griglia ordinata delle locazioni u delle covariate.

    Attributes:
        points: Array (M, r) delle locazioni; l'ordine delle righe definisce lo slot
    """
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise ParameterError(f"Griglia non valida: forma {points.shape}, attesi M >= 1 punti r-dimensionali")
        if not np.all(np.isfinite(points)):
            raise ParameterError("Griglia non valida: coordinate non finite")
        if len(np.unique(points, axis=0)) != points.shape[0]:
            raise ParameterError("Griglia non valida: locazioni duplicate")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def distances(self) -> np.ndarray:
        """Matrice (M, M) delle distanze euclidee tra le locazioni."""
        return cdist(self.points, self.points, metric="euclidean")

    def key(self) -> bytes:
        return self.points.tobytes()

    @classmethod
    def regular(cls, m: int, start: float = 1.0) -> "CovariateGrid":
        """Griglia unidimensionale {start, start+1, ..., start+m-1}."""
        return cls(np.arange(start, start + m, dtype=float)[:, None])

    @classmethod
    def from_csv(cls, path: str) -> "CovariateGrid":
        """
        Legge la griglia da CSV con header `slot,coord_1..coord_r`.

        Args:
            path: Path del file CSV della griglia

        Returns:
            CovariateGrid con le righe ordinate per slot

        Raises:
            DataError: Se il file non esiste o non ha il formato atteso
        """
        if not os.path.exists(path):
            raise DataError(f"File griglia {path} non trovato")
        try:
            df = pd.read_csv(path)
        except Exception as e:
            raise DataError(f"File griglia {path} illeggibile: {e}") from e
        coord_cols = [c for c in df.columns if c.startswith("coord_")]
        if "slot" not in df.columns or not coord_cols:
            raise DataError(f"File griglia {path}: header atteso `slot,coord_1..coord_r`, trovato {list(df.columns)}")
        df = df.sort_values("slot")
        if list(df["slot"]) != list(range(len(df))):
            raise DataError(f"File griglia {path}: gli slot devono essere 0..M-1 senza buchi")
        try:
            return cls(df[coord_cols].to_numpy(dtype=float))
        except ParameterError as e:
            raise DataError(f"File griglia {path}: {e}") from e

    def to_csv(self, path: str):
        df = pd.DataFrame(self.points, columns=[f"coord_{j + 1}" for j in range(self.dim)])
        df.insert(0, "slot", np.arange(self.M))
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


@dataclass
class GroupedDataset:
    """
    Osservazioni scalari raggruppate per slot della griglia.

    Attributes:
        grid: Griglia delle covariate
        values: Per ogni slot u, array delle osservazioni y_u1..y_un_u
        streams: Per ogni slot u, array degli stream-id (solo metadati di valutazione)
    """
    grid: CovariateGrid
    values: List[np.ndarray]
    streams: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        if len(self.values) != self.grid.M:
            raise DataError(f"Dataset con {len(self.values)} gruppi ma la griglia ha {self.grid.M} slot")
        self.values = [np.asarray(v, dtype=float).reshape(-1) for v in self.values]
        for u, v in enumerate(self.values):
            if not np.all(np.isfinite(v)):
                raise DataError(f"Valori non finiti nel gruppo {u}")
            v.setflags(write=False)
        if self.streams is not None:
            self.streams = [np.asarray(s).reshape(-1) for s in self.streams]
            if [len(s) for s in self.streams] != self.group_sizes:
                raise DataError("Gli stream-id non coincidono con il numero di osservazioni per gruppo")

    @property
    def M(self) -> int:
        return self.grid.M

    @property
    def group_sizes(self) -> List[int]:
        return [len(v) for v in self.values]

    @property
    def N(self) -> int:
        return int(sum(self.group_sizes))

    @property
    def has_streams(self) -> bool:
        return self.streams is not None

    def flat_groups(self) -> np.ndarray:
        """Slot di appartenenza di ogni osservazione, in ordine gruppo per gruppo."""
        return np.repeat(np.arange(self.M), self.group_sizes)

    def flat_values(self) -> np.ndarray:
        if self.N == 0:
            return np.zeros(0)
        return np.concatenate(self.values)

    def without_streams(self) -> "GroupedDataset":
        return GroupedDataset(grid=self.grid, values=list(self.values), streams=None)

    @classmethod
    def from_csv(cls, path: str, grid: CovariateGrid) -> "GroupedDataset":
        """
        Legge le osservazioni da CSV con header `group,value[,stream]`.

        L'ordine delle righe all'interno di ogni gruppo viene preservato
        (è l'ordine di scansione dei sampler).

        Args:
            path: Path del file CSV dei dati
            grid: Griglia a cui si riferiscono gli indici `group`

        Returns:
            GroupedDataset

        Raises:
            DataError: Se il file è illeggibile o contiene slot fuori griglia
        """
        if not os.path.exists(path):
            raise DataError(f"File dati {path} non trovato")
        try:
            df = pd.read_csv(path)
        except Exception as e:
            raise DataError(f"File dati {path} illeggibile: {e}") from e
        if "group" not in df.columns or "value" not in df.columns:
            raise DataError(f"File dati {path}: header atteso `group,value[,stream]`, trovato {list(df.columns)}")
        groups = df["group"].to_numpy()
        if len(groups) and (groups.min() < 0 or groups.max() >= grid.M):
            raise DataError(f"File dati {path}: indici di gruppo fuori dalla griglia (M={grid.M})")
        values = [df.loc[df["group"] == u, "value"].to_numpy(dtype=float) for u in range(grid.M)]
        streams = None
        if "stream" in df.columns:
            streams = [df.loc[df["group"] == u, "stream"].to_numpy() for u in range(grid.M)]
        logger.info(f"Caricate {len(df)} osservazioni su {grid.M} gruppi da {path}")
        return cls(grid=grid, values=values, streams=streams)

    def to_csv(self, path: str):
        df = pd.DataFrame({"group": self.flat_groups(), "value": self.flat_values()})
        if self.streams is not None:
            df["stream"] = np.concatenate(self.streams) if self.N else []
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


@dataclass
class SyntheticTruth:
    """
    Verità generativa di un dataset simulato.

    Attributes:
        atoms: Array (K_true, M) degli atomi globali veri
        labels: Per ogni slot u, componente vera di ogni osservazione
        params: Parametri del generatore
    """
    atoms: np.ndarray
    labels: List[np.ndarray]
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.atoms.shape[0]

    def to_json(self, path: str):
        payload = {
            "atoms": [[float(x) for x in row] for row in np.asarray(self.atoms)],
            "labels": [[int(x) for x in lab] for lab in self.labels],
            "params": self.params,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, path: str) -> "SyntheticTruth":
        if not os.path.exists(path):
            raise DataError(f"File verità {path} non trovato")
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        return cls(
            atoms=np.asarray(payload["atoms"], dtype=float),
            labels=[np.asarray(lab, dtype=int) for lab in payload["labels"]],
            params=payload.get("params", {}),
        )
