"""Sampler marginale di Pólya sullo spazio (t, k) con atomi integrati."""

import logging
from typing import List, Tuple

import numpy as np
from scipy.special import logsumexp

from src.inference.base import GibbsSampler, sample_log_categorical
from src.models.state import CountStats, MarginalState, TraceRecord, marginal_counts, recompute_counts
from src.prior.conjugate import ComponentStats, PosteriorCache, atom_posterior, log_predictive_new
from src.utils.config import DEFAULT_INIT_K
from src.utils.errors import CorruptionError, ParameterError

logger = logging.getLogger(__name__)


class MarginalSampler(GibbsSampler):
    """
    Gibbs collassato della franchise: Q e G_u sono integrati.

    Le istanze t sono locali al gruppo che le ha create. Una sweep riassegna
    prima ogni t_ui nell'ordine di scansione, poi ogni k_t nell'ordine di
    creazione delle istanze, infine gli iperparametri.
    """

    name = "MarginalSampler"

    def __init__(self, *args, **kwargs):
        if kwargs.get("kernel_mh") is not None:
            raise ParameterError("H.resample è supportato solo dal sampler condizionale")
        super().__init__(*args, **kwargs)
        self.state: MarginalState = None
        self.stats: ComponentStats = None
        self.cache: PosteriorCache = None

    def initialize(self, init: str = "single", init_k: int = DEFAULT_INIT_K) -> MarginalState:
        """
        Stato iniziale: una componente con un'istanza per gruppo ("single"),
        oppure componenti uniformi su init_k etichette con un'istanza per
        coppia (gruppo, componente) ("random").
        """
        if init == "single":
            labels = np.zeros(self.N, dtype=int)
        elif init == "random":
            labels = self.rng.integers(0, max(1, init_k), size=self.N)
        else:
            raise ParameterError(f"init sconosciuto: {init!r}")
        used, z = np.unique(labels, return_inverse=True)
        z = z.reshape(-1).astype(int)
        K = len(used)
        pairs, t = np.unique(np.stack([self.groups, z], axis=1), axis=0, return_inverse=True) if self.N else (np.zeros((0, 2), dtype=int), np.zeros(0, dtype=int))
        t = np.asarray(t).reshape(-1).astype(int)
        owner_t = pairs[:, 0].astype(int)
        k_of_t = pairs[:, 1].astype(int)
        m_uk = np.zeros((self.M, K), dtype=int)
        np.add.at(m_uk, (owner_t, k_of_t), 1)
        self.state = MarginalState(
            t=t,
            k_of_t=k_of_t,
            owner_t=owner_t,
            n_t=np.bincount(t, minlength=len(k_of_t)).astype(int),
            m_uk=m_uk,
            hyper=self.hyper,
        )
        self.stats = ComponentStats.from_assignments(self.groups, self.values, z, K, self.M)
        self.cache = PosteriorCache(self.H, self.hyper.sigma_eps2, self.stats)
        self.state.atoms = self.draw_atoms()
        logger.info(f"[{self.name}] Inizializzazione '{init}' completata: K={K}, T={self.state.T}, N={self.N}")
        return self.state

    def counts(self) -> CountStats:
        return marginal_counts(self.state, self.groups, self.M)

    def recompute(self) -> CountStats:
        return recompute_counts(self.state, self.groups, self.M)

    def validate(self, where: str):
        s = self.state
        if s.T and np.any(s.n_t < 1):
            raise CorruptionError(f"[{self.name}] Istanza orfana dopo {where}")
        if s.K and np.any(s.q_k < 1):
            raise CorruptionError(f"[{self.name}] Componente con q_k = 0 dopo {where}")
        oracle = ComponentStats.from_assignments(self.groups, self.values, s.z(), s.K, self.M)
        if not np.array_equal(oracle.counts, self.stats.counts):
            raise CorruptionError(f"[{self.name}] Statistiche per componente divergenti dopo {where}")
        self.check_counts(where)

    def _maybe_check(self, where: str):
        if self.check:
            self.validate(where)

    # --- gestione di istanze e componenti ---

    def _delete_instance(self, t: int):
        s = self.state
        s.k_of_t = np.delete(s.k_of_t, t)
        s.owner_t = np.delete(s.owner_t, t)
        s.n_t = np.delete(s.n_t, t)
        s.t[s.t > t] -= 1

    def _delete_component(self, k: int):
        s = self.state
        s.m_uk = np.delete(s.m_uk, k, axis=1)
        s.k_of_t[s.k_of_t > k] -= 1
        self.stats.delete_component(k)
        self.cache.delete(k)
        logger.debug(f"[{self.name}] Componente {k} rimossa, K={s.K}")

    def _new_component(self) -> int:
        s = self.state
        s.m_uk = np.hstack([s.m_uk, np.zeros((self.M, 1), dtype=int)])
        self.stats.append_component()
        self.cache.append()
        return s.K - 1

    def _new_instance(self, u: int, k: int) -> int:
        s = self.state
        s.k_of_t = np.append(s.k_of_t, k)
        s.owner_t = np.append(s.owner_t, u)
        s.n_t = np.append(s.n_t, 0)
        s.m_uk[u, k] += 1
        return s.T - 1

    def _component_log_weights(self, log_f: np.ndarray, log_f_new: float) -> np.ndarray:
        """log(q_k·f_k) per k esistente e log(γ·f_new) in coda."""
        q = self.state.q_k.astype(float)
        logw = np.empty(len(q) + 1)
        with np.errstate(divide="ignore"):
            logw[:-1] = np.log(q) + log_f
        logw[-1] = np.log(self.hyper.gamma) + log_f_new
        return logw

    # --- aggiornamenti ---

    def _remove_observation(self, i: int):
        """Toglie y_ui dalla sua istanza; elimina istanza e componente rimaste vuote."""
        s = self.state
        u = self.groups[i]
        y = self.values[i]
        t_old = s.t[i]
        k_old = s.k_of_t[t_old]
        s.n_t[t_old] -= 1
        s.t[i] = -1
        self.stats.remove(k_old, u, y)
        self.cache.invalidate(k_old)
        if s.n_t[t_old] == 0:
            s.m_uk[u, k_old] -= 1
            self._delete_instance(t_old)
            if s.m_uk[:, k_old].sum() == 0:
                self._delete_component(k_old)
        return u, y

    def t_log_weights(self, u: int, y: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Log-pesi di t_ui con l'osservazione già tolta.

        Istanza esistente t del gruppo: log n_ut^{−ui} + log f_{k_t}(y).
        Istanza nuova (in coda): log α_u + log[Σ_k q_k f_k(y) + γ f_new(y)] − log(q· + γ).

        Returns:
            (log-pesi sulle istanze del gruppo più la nuova, log-pesi delle
            componenti per la nuova istanza, indici delle istanze del gruppo)
        """
        s = self.state
        log_f = self.cache.log_predictive(u, y) if s.K else np.zeros(0)
        log_f_new = log_predictive_new(self.H, u, y, self.hyper.sigma_eps2)
        comp_logw = self._component_log_weights(log_f, log_f_new)
        owned = np.flatnonzero(s.owner_t == u)
        logw = np.empty(len(owned) + 1)
        logw[:-1] = np.log(s.n_t[owned]) + log_f[s.k_of_t[owned]]
        logw[-1] = np.log(self.hyper.alpha[u]) + logsumexp(comp_logw) - np.log(s.q_k.sum() + self.hyper.gamma)
        return logw, comp_logw, owned

    def sample_t(self, i: int):
        """Riassegna t_ui secondo t_log_weights; una nuova istanza estrae poi la sua componente."""
        s = self.state
        u, y = self._remove_observation(i)
        logw, comp_logw, owned = self.t_log_weights(u, y)
        choice = sample_log_categorical(logw, self.rng)
        if choice < len(owned):
            t_new = int(owned[choice])
            k = int(s.k_of_t[t_new])
        else:
            k = sample_log_categorical(comp_logw, self.rng)
            if k == s.K:
                k = self._new_component()
            t_new = self._new_instance(u, k)
        s.t[i] = t_new
        s.n_t[t_new] += 1
        self.stats.add(k, u, y)
        self.cache.invalidate(k)

    def _blocks(self) -> List[np.ndarray]:
        order = np.argsort(self.state.t, kind="stable")
        bounds = np.cumsum(self.state.n_t)[:-1]
        return np.split(order, bounds)

    def _remove_block(self, t: int, members: np.ndarray):
        """Toglie il blocco dell'istanza t dalla sua componente (eliminata se resta senza istanze)."""
        s = self.state
        if members.size == 0:
            raise CorruptionError(f"[{self.name}] Istanza {t} senza osservazioni")
        u = int(s.owner_t[t])
        values = self.values[members]
        k_old = int(s.k_of_t[t])
        self.stats.remove_block(k_old, u, values)
        self.cache.invalidate(k_old)
        s.m_uk[u, k_old] -= 1
        if s.m_uk[:, k_old].sum() == 0:
            self._delete_component(k_old)
        return u, values

    def k_log_weights(self, u: int, values: np.ndarray) -> np.ndarray:
        """log(q_k^{−t} f_k^{−y_t}(y_t)) per k esistente e log(γ f_new(y_t)) in coda."""
        log_f = np.array([self.cache.log_predictive_block(k, u, values) for k in range(self.state.K)])
        log_f_new = self.cache.log_predictive_block(None, u, values)
        return self._component_log_weights(log_f, log_f_new)

    def sample_k(self, t: int, members: np.ndarray):
        """Riassegna k_t secondo k_log_weights; il blocco di osservazioni dell'istanza si sposta per intero."""
        s = self.state
        u, values = self._remove_block(t, members)
        k = sample_log_categorical(self.k_log_weights(u, values), self.rng)
        if k == s.K:
            k = self._new_component()
        s.k_of_t[t] = k
        s.m_uk[u, k] += 1
        self.stats.add_block(k, u, values)
        self.cache.invalidate(k)

    def draw_atoms(self) -> np.ndarray:
        """Atomi estratti dalle posterior esatte data la partizione corrente."""
        atoms = np.zeros((self.state.K, self.M))
        for k in range(self.state.K):
            post = atom_posterior(self.H, self.stats.counts[k], self.stats.sums[k], self.hyper.sigma_eps2)
            atoms[k] = post.sample(self.rng)
        return atoms

    def polya_beta(self) -> np.ndarray:
        """Media di Pólya dei pesi globali: (q_1, ..., q_K, γ) / (q· + γ)."""
        weights = np.append(self.state.q_k.astype(float), self.hyper.gamma)
        return weights / weights.sum()

    def sweep(self, sweep_index: int) -> TraceRecord:
        if self.state is None:
            self.initialize()
        for i in range(self.N):
            self.sample_t(i)
        self._maybe_check("sample_t")
        blocks = self._blocks()
        for t in range(self.state.T):
            self.sample_k(t, blocks[t])
        self._maybe_check("sample_k")

        s = self.state
        s.atoms = self.draw_atoms()
        z = s.z()
        residuals = self.values - s.atoms[z, self.groups] if self.N else np.zeros(0)
        changed = self.update_hyperparameters(
            K=s.K,
            q_total=int(s.m_uk.sum()),
            m_u=s.m_uk.sum(axis=1),
            residuals=residuals,
            atoms=s.atoms,
        )
        if changed:
            self.cache.invalidate_all(H=self.H, sigma_eps2=self.hyper.sigma_eps2)
        s.hyper = self.hyper
        return TraceRecord(
            sweep=sweep_index,
            gamma=self.hyper.gamma,
            alpha=self.hyper.alpha.copy(),
            sigma_eps2=self.hyper.sigma_eps2,
            z=z,
            atoms=s.atoms.copy(),
            beta=self.polya_beta(),
            kernel=(self.H.sigma2, self.H.omega),
        )
