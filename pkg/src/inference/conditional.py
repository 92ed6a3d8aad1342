"""Sampler condizionale (stick-breaking) sullo spazio (z, m, β, φ)."""

import logging

import numpy as np

from src.inference.base import GibbsSampler, sample_log_categorical
from src.models.state import ConditionalState, CountStats, TraceRecord, recompute_counts
from src.models.sticks import TINY, dirichlet_draw
from src.prior.conjugate import LOG_2PI, atom_posterior, log_predictive_new
from src.utils.config import ATOM_UPDATES, DEFAULT_INIT_K
from src.utils.errors import CorruptionError, NumericalError, ParameterError

logger = logging.getLogger(__name__)


class ConditionalSampler(GibbsSampler):
    """
    Gibbs condizionale: gli atomi φ_k e i pesi β sono esplicitati.

    Una sweep applica nell'ordine sample_z, sample_m (con rimozione delle
    componenti vuote), sample_beta, sample_atoms e gli aggiornamenti degli
    iperparametri.
    """

    name = "ConditionalSampler"

    def __init__(self, *args, atom_update: str = "joint", **kwargs):
        super().__init__(*args, **kwargs)
        if atom_update not in ATOM_UPDATES:
            raise ParameterError(f"H.atom_update sconosciuto: {atom_update!r} (ammessi: {ATOM_UPDATES})")
        self.atom_update = atom_update
        self.state: ConditionalState = None

    def initialize(self, init: str = "single", init_k: int = DEFAULT_INIT_K) -> ConditionalState:
        """
        Stato iniziale: tutte le osservazioni in una componente, oppure
        assegnazioni uniformi su init_k componenti ("random").
        """
        if init == "single":
            K = 1 if self.N else 0
            z = np.zeros(self.N, dtype=int)
        elif init == "random":
            labels = self.rng.integers(0, max(1, init_k), size=self.N)
            used, z = np.unique(labels, return_inverse=True)
            K = len(used)
            z = z.reshape(-1).astype(int)
        else:
            raise ParameterError(f"init sconosciuto: {init!r}")
        n_uk = np.zeros((self.M, K), dtype=int)
        np.add.at(n_uk, (self.groups, z), 1)
        self.state = ConditionalState(
            z=z,
            n_uk=n_uk,
            m_uk=np.zeros((self.M, K), dtype=int),
            beta=np.append(np.full(K, 1.0 / (K + 1)), 1.0 / (K + 1)),
            atoms=np.zeros((K, self.M)),
            hyper=self.hyper,
        )
        self.sample_m()
        self.sample_beta()
        self.sample_atoms()
        logger.info(f"[{self.name}] Inizializzazione '{init}' completata: K={self.state.K}, N={self.N}")
        return self.state

    def counts(self) -> CountStats:
        return self.state.counts()

    def recompute(self) -> CountStats:
        return recompute_counts(self.state, self.groups, self.M)

    def validate(self, where: str):
        """Validità dello stato dopo ogni sotto-passo."""
        s = self.state
        if s.beta.shape != (s.K + 1,) or abs(s.beta.sum() - 1.0) > 1e-12 * max(1, s.K):
            raise CorruptionError(f"[{self.name}] β non è un simplesso di lunghezza K+1 dopo {where}")
        if s.K and np.any(s.q_k < 1):
            raise CorruptionError(f"[{self.name}] Componente viva con q_k = 0 dopo {where}")
        self.check_counts(where)

    def _maybe_check(self, where: str):
        if self.check:
            self.validate(where)

    def z_log_weights(self, u: int, y: float) -> np.ndarray:
        """
        Log-pesi di z_ui con l'osservazione già tolta da n_uk:
        log(n^{−ui}_{u·k} + α_u β_k) + log F(y | φ_uk) per k esistente e
        log(α_u β_new) + log predittiva a priori in coda.
        """
        s = self.state
        sigma_eps2 = s.hyper.sigma_eps2
        alpha_u = s.hyper.alpha[u]
        logw = np.empty(s.K + 1)
        logw[:-1] = np.log(s.n_uk[u] + np.maximum(alpha_u * s.beta[:-1], TINY)) - 0.5 * (
            LOG_2PI + np.log(sigma_eps2) + (y - s.atoms[:, u]) ** 2 / sigma_eps2
        )
        logw[-1] = np.log(max(alpha_u * s.beta[-1], TINY)) + log_predictive_new(self.H, u, y, sigma_eps2)
        return logw

    def sample_z(self):
        """Riassegna ogni z_ui secondo z_log_weights; l'ultima voce apre una componente nuova."""
        s = self.state
        for i in range(self.N):
            u = self.groups[i]
            y = self.values[i]
            s.n_uk[u, s.z[i]] -= 1
            try:
                k = sample_log_categorical(self.z_log_weights(u, y), self.rng)
            except NumericalError as e:
                raise NumericalError(f"[{self.name}] {e} per l'osservazione {i}") from e
            if k == s.K:
                k = self._new_component(u, y)
            s.z[i] = k
            s.n_uk[u, k] += 1
        self._maybe_check("sample_z")

    def _new_component(self, u: int, y: float) -> int:
        s = self.state
        b = self.rng.beta(1.0, s.hyper.gamma)
        remainder = s.beta[-1]
        s.beta = np.append(s.beta[:-1], [remainder * b, remainder * (1.0 - b)])
        counts = np.zeros(self.M)
        sums = np.zeros(self.M)
        counts[u] = 1
        sums[u] = y
        atom = atom_posterior(self.H, counts, sums, s.hyper.sigma_eps2).sample(self.rng)
        s.atoms = np.vstack([s.atoms, atom])
        s.n_uk = np.hstack([s.n_uk, np.zeros((self.M, 1), dtype=int)])
        new_m = np.zeros((self.M, 1), dtype=int)
        new_m[u] = 1
        s.m_uk = np.hstack([s.m_uk, new_m])
        logger.debug(f"[{self.name}] Nuova componente {s.K - 1} allo slot {u}")
        return s.K - 1

    def sample_m(self):
        """m_uk ~ Antoniak(n_u·k, α_u β_k), poi rimozione delle componenti con q_k = 0."""
        s = self.state
        m_uk = np.zeros_like(s.n_uk)
        for u, k in zip(*np.nonzero(s.n_uk)):
            a = max(s.hyper.alpha[u] * s.beta[k], TINY)
            m_uk[u, k] = self.stirling.sample_table_count(int(s.n_uk[u, k]), a, self.rng)
        s.m_uk = m_uk
        self.collect_garbage()
        self._maybe_check("sample_m")

    def collect_garbage(self):
        """Rimuove le componenti senza dati, compattando gli indici; il loro β passa a β_new."""
        s = self.state
        keep = s.m_uk.sum(axis=0) > 0
        if keep.all():
            return
        if np.any(s.n_uk[:, ~keep]):
            raise CorruptionError(f"[{self.name}] Rimozione di una componente con dati assegnati")
        remap = np.cumsum(keep) - 1
        s.z = remap[s.z]
        s.beta = np.append(s.beta[:-1][keep], s.beta[-1] + s.beta[:-1][~keep].sum())
        s.atoms = s.atoms[keep]
        s.n_uk = s.n_uk[:, keep]
        s.m_uk = s.m_uk[:, keep]
        logger.debug(f"[{self.name}] Rimosse {int((~keep).sum())} componenti vuote, K={s.K}")

    def sample_beta(self):
        """β | q ~ Dir(q_1, ..., q_K, γ)."""
        s = self.state
        s.beta = dirichlet_draw(np.append(s.q_k.astype(float), s.hyper.gamma), self.rng)
        self._maybe_check("sample_beta")

    def component_sums(self) -> np.ndarray:
        s = self.state
        sums = np.zeros((s.K, self.M))
        if self.N:
            np.add.at(sums, (s.z, self.groups), self.values)
        return sums

    def sample_atoms(self):
        """
        φ_k dalla posterior esatta (joint) oppure con Gibbs per slot tramite
        le condizionali di H ("gibbs", non per la variante constant).
        """
        s = self.state
        sums = self.component_sums()
        sigma_eps2 = s.hyper.sigma_eps2
        use_gibbs = self.atom_update == "gibbs" and self.H.variant != "constant"
        for k in range(s.K):
            counts = s.n_uk[:, k]
            if use_gibbs:
                s.atoms[k] = self._gibbs_atom(s.atoms[k].copy(), counts, sums[k], sigma_eps2)
            else:
                s.atoms[k] = atom_posterior(self.H, counts, sums[k], sigma_eps2).sample(self.rng)
        self._maybe_check("sample_atoms")

    def _gibbs_atom(self, phi: np.ndarray, counts: np.ndarray, sums: np.ndarray, sigma_eps2: float) -> np.ndarray:
        for u in range(self.M):
            if self.M > 1:
                mean, var = self.H.conditional_slot(phi, u)
            else:
                mean, var = self.H.marginal_slot(u)
            prec = 1.0 / var + counts[u] / sigma_eps2
            post_mean = (mean / var + sums[u] / sigma_eps2) / prec
            phi[u] = post_mean + self.rng.standard_normal() / np.sqrt(prec)
        return phi

    def residuals(self) -> np.ndarray:
        s = self.state
        if not self.N:
            return np.zeros(0)
        return self.values - s.atoms[s.z, self.groups]

    def sample_hyperparameters(self):
        s = self.state
        self.update_hyperparameters(
            K=s.K,
            q_total=int(s.m_uk.sum()),
            m_u=s.m_uk.sum(axis=1),
            residuals=self.residuals(),
            atoms=s.atoms,
        )
        s.hyper = self.hyper

    def sweep(self, sweep_index: int) -> TraceRecord:
        """Una sweep completa; restituisce il TraceRecord corrispondente."""
        if self.state is None:
            self.initialize()
        self.sample_z()
        self.sample_m()
        self.sample_beta()
        self.sample_atoms()
        self.sample_hyperparameters()
        s = self.state
        return TraceRecord(
            sweep=sweep_index,
            gamma=s.hyper.gamma,
            alpha=s.hyper.alpha.copy(),
            sigma_eps2=s.hyper.sigma_eps2,
            z=s.z.copy(),
            atoms=s.atoms.copy(),
            beta=s.beta.copy(),
            kernel=(self.H.sigma2, self.H.omega),
        )
