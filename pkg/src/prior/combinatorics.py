"""Numeri di Stirling di prima specie in log-spazio e distribuzione di Antoniak."""

import logging
import threading
from typing import List

import numpy as np
from scipy.special import logsumexp

from src.utils.errors import ParameterError

logger = logging.getLogger(__name__)


class StirlingTable:
    """
    Tabella triangolare di log s(n, m), cresciuta su richiesta.

    Ogni riga è ottenuta dalla precedente con la ricorrenza
    s(n+1, m) = s(n, m−1) + n·s(n, m), valutata con logaddexp.
    Le voci nulle valgono −inf.
    """

    def __init__(self, n_max: int = 64):
        self._rows: List[np.ndarray] = [np.array([0.0])]
        self._lock = threading.Lock()
        self._grow(n_max)

    @property
    def n_max(self) -> int:
        return len(self._rows) - 1

    def _grow(self, n: int):
        with self._lock:
            while len(self._rows) <= n:
                k = len(self._rows) - 1
                prev = self._rows[-1]
                row = np.full(k + 2, -np.inf)
                row[1:] = prev
                if k > 0:
                    row[:-1] = np.logaddexp(row[:-1], np.log(k) + prev)
                self._rows.append(row)
        logger.debug(f"[StirlingTable] Tabella estesa fino a n={self.n_max}")

    def row(self, n: int) -> np.ndarray:
        """Riga (n+1,) dei valori log s(n, 0..n)."""
        if n < 0:
            raise ParameterError(f"n negativo: {n}")
        if n > self.n_max:
            self._grow(n)
        return self._rows[n]

    def log_stirling1(self, n: int, m: int) -> float:
        if n < 0 or m < 0:
            raise ParameterError(f"Argomenti negativi: s({n}, {m})")
        if m > n:
            return -np.inf
        return float(self.row(n)[m])

    def table_count_log_probs(self, n: int, a: float) -> np.ndarray:
        """
        Log-probabilità normalizzate di m = 0..n tavoli con n clienti e concentrazione a.

        p(m) ∝ s(n, m)·a^m; il fattore Γ(a)/Γ(a+n) si elide nella normalizzazione.
        """
        if not a > 0:
            raise ParameterError(f"Concentrazione non positiva nel table count: {a!r}")
        logw = self.row(n) + np.arange(n + 1) * np.log(a)
        return logw - logsumexp(logw)

    def sample_table_count(self, n: int, a: float, rng: np.random.Generator) -> int:
        """
        Estrae m_uk dalla distribuzione di Antoniak con CDF inversa.

        Args:
            n: Numero di osservazioni n_u·k
            a: Concentrazione α_u β_k
            rng: Generatore numpy

        Returns:
            m, pari a 0 se e solo se n = 0
        """
        if not a > 0:
            raise ParameterError(f"Concentrazione non positiva nel table count: {a!r}")
        if n <= 1:
            return int(n)
        cdf = np.cumsum(np.exp(self.table_count_log_probs(n, a)))
        m = int(np.searchsorted(cdf, rng.uniform() * cdf[-1], side="right"))
        return max(1, min(m, n))


_DEFAULT_TABLE = StirlingTable()


def log_stirling1(n: int, m: int) -> float:
    """log s(n, m) dalla tabella condivisa del processo."""
    return _DEFAULT_TABLE.log_stirling1(n, m)


def sample_table_count(n: int, a: float, rng: np.random.Generator) -> int:
    return _DEFAULT_TABLE.sample_table_count(n, a, rng)


def table_count_log_probs(n: int, a: float) -> np.ndarray:
    return _DEFAULT_TABLE.table_count_log_probs(n, a)
