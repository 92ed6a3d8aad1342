"""Generatori dei dataset sintetici con la loro verità generativa."""

import logging
from typing import List, Optional, Tuple

import numpy as np

from src.models.dataset import CovariateGrid, GroupedDataset, SyntheticTruth
from src.prior.base_measure import BaseMeasure
from src.utils.errors import ParameterError

logger = logging.getLogger(__name__)

GRID_SIZE = 15

DATASET_A = {"K": 5, "per_component": 20, "sigma2": 1.0, "omega": 0.01, "sigma_eps": 0.1}
DATASET_B = {"n_per_group": 30, "sigma2": 1.0, "omega": 0.05, "slope": 0.2, "splits": (5, 10),
             "sigma_eps": 0.2, "separation": 3.0, "max_attempts": 1000}
TWO_GROUP = {"sigma_eps": 0.1, "amplitude": 0.5, "gap": 6.0, "n_subjects": 20, "horizon": 24}


def _observe(
    atoms: np.ndarray,
    labels: List[np.ndarray],
    sigma_eps: float,
    rng: np.random.Generator,
    shuffle: bool = True,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """y_ui = φ_{z_ui}(u) + N(0, σ_ε²); con shuffle l'ordine all'interno del gruppo è casuale."""
    values, out_labels = [], []
    for u, lab in enumerate(labels):
        lab = rng.permutation(lab) if shuffle else np.asarray(lab)
        values.append(atoms[lab, u] + sigma_eps * rng.standard_normal(len(lab)))
        out_labels.append(lab.astype(int))
    return values, out_labels


def gen_dataset_A(seed: int) -> Tuple[GroupedDataset, SyntheticTruth]:
    """
    Dataset A: 5 atomi globali da un GP su {1..15}, 100 osservazioni per gruppo (20 per atomo).

    Args:
        seed: Seed del generatore

    Returns:
        Coppia (dataset, verità)
    """
    p = DATASET_A
    rng = np.random.default_rng(seed)
    grid = CovariateGrid.regular(GRID_SIZE)
    H = BaseMeasure("gp", grid, mean=0.0, sigma2=p["sigma2"], omega=p["omega"])
    atoms = H.sample_atoms(p["K"], rng)
    labels = [np.repeat(np.arange(p["K"]), p["per_component"]) for _ in range(grid.M)]
    values, labels = _observe(atoms, labels, p["sigma_eps"], rng)
    logger.info(f"[Simulate] Dataset A: {p['K']} atomi, {grid.M} gruppi × {p['K'] * p['per_component']} osservazioni")
    return GroupedDataset(grid, values), SyntheticTruth(atoms, labels, dict(p, preset="A", seed=seed))


def active_schedule(splits: Tuple[int, ...], M: int) -> np.ndarray:
    """Numero di atomi attivi per slot: uno in più a ogni locazione di split (1-based)."""
    u = np.arange(1, M + 1)
    return 1 + sum((u >= s).astype(int) for s in splits)


def even_split(n: int, active: int) -> np.ndarray:
    """Etichette di n osservazioni divise in parti uguali tra `active` atomi; il resto va all'atomo 0."""
    sizes = np.full(active, n // active)
    sizes[0] += n - sizes.sum()
    return np.repeat(np.arange(active), sizes)


def _bifurcating_atoms(H: BaseMeasure, slope: float, splits: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Un atomo iniziale più uno per split, ricentrato sull'atomo precedente allo slot prima dello split."""
    u = H.grid.points[:, 0]
    beta_mu = rng.uniform(-slope, slope)
    atoms = H.sample_atoms(len(splits) + 1, rng) + beta_mu * u
    for j, s in enumerate(splits, start=1):
        anchor = s - 2  # slot 0-based della locazione s − 1
        atoms[j] += atoms[j - 1, anchor] - atoms[j, anchor]
        atoms[j, anchor] = atoms[j - 1, anchor]
    return atoms


def _separated(atoms: np.ndarray, active: np.ndarray, threshold: float) -> bool:
    """Ogni coppia di atomi supera la soglia in almeno uno slot in cui entrambi sono attivi."""
    for a in range(atoms.shape[0]):
        for b in range(a + 1, atoms.shape[0]):
            both = active > b
            if not np.any(np.abs(atoms[a, both] - atoms[b, both]) > threshold):
                return False
    return True


def gen_dataset_B(seed: int) -> Tuple[GroupedDataset, SyntheticTruth]:
    """
    Dataset B: traiettorie che biforcano. Un atomo su u ∈ [1, 4], due su [5, 9], tre su [10, 15].

    Ogni nuovo atomo è un'estrazione indipendente dallo stesso GP (media β_μ u)
    ricentrata per coincidere con il precedente nello slot prima dello split.
    Le estrazioni in cui due atomi non si separano mai di 3σ_ε vengono scartate.

    Args:
        seed: Seed del generatore

    Returns:
        Coppia (dataset, verità)
    """
    p = DATASET_B
    rng = np.random.default_rng(seed)
    grid = CovariateGrid.regular(GRID_SIZE)
    H = BaseMeasure("gp", grid, mean=0.0, sigma2=p["sigma2"], omega=p["omega"])
    active = active_schedule(p["splits"], grid.M)
    threshold = p["separation"] * p["sigma_eps"]

    rejected = 0
    atoms = _bifurcating_atoms(H, p["slope"], p["splits"], rng)
    while not _separated(atoms, active, threshold):
        rejected += 1
        if rejected >= p["max_attempts"]:
            logger.warning(f"[Simulate] Dataset B: nessuna estrazione separata dopo {rejected} tentativi, uso l'ultima")
            break
        atoms = _bifurcating_atoms(H, p["slope"], p["splits"], rng)
    if rejected:
        logger.warning(f"[Simulate] Dataset B: {rejected} estrazioni scartate (atomi entro {threshold:.2f})")

    labels = [even_split(p["n_per_group"], int(a)) for a in active]
    values, labels = _observe(atoms, labels, p["sigma_eps"], rng)
    logger.info(f"[Simulate] Dataset B: atomi attivi per slot {active.tolist()}")
    params = dict(p, splits=list(p["splits"]), preset="B", seed=seed, rejected=rejected)
    return GroupedDataset(grid, values), SyntheticTruth(atoms, labels, params)


def two_group_curves(horizon: int, split: int, amplitude: float, gap: float) -> np.ndarray:
    """Due curve medie (2, horizon) uguali fino al giorno split − 1 e distanti `gap` da split in poi."""
    day = np.arange(1, horizon + 1)
    base = amplitude * np.sin(2 * np.pi * day / horizon)
    return np.stack([base, base + gap * (day >= split)])


def gen_two_group(
    seed: int,
    n_subjects: int = TWO_GROUP["n_subjects"],
    horizon: int = TWO_GROUP["horizon"],
    split: Optional[int] = None,
) -> Tuple[GroupedDataset, SyntheticTruth]:
    """
    Surrogato a due gruppi di soggetti: una osservazione per soggetto e giorno.

    I primi n_subjects − n_subjects // 2 soggetti seguono la prima curva, gli
    altri la seconda. Lo stream-id di ogni osservazione è il soggetto.

    Args:
        seed: Seed del generatore
        n_subjects: Numero di soggetti (>= 2)
        horizon: Numero di giorni (gruppi)
        split: Primo giorno dell'intervallo divergente (default horizon − 3)

    Returns:
        Coppia (dataset, verità)

    Raises:
        ParameterError: Se i parametri sono fuori dominio
    """
    if n_subjects < 2:
        raise ParameterError(f"Servono almeno 2 soggetti, trovato {n_subjects}")
    if horizon < 2:
        raise ParameterError(f"Servono almeno 2 giorni, trovato {horizon}")
    split = horizon - 3 if split is None else split
    if not 2 <= split <= horizon:
        raise ParameterError(f"Giorno di split {split} fuori da [2, {horizon}]")
    p = TWO_GROUP
    rng = np.random.default_rng(seed)
    grid = CovariateGrid.regular(horizon)
    atoms = two_group_curves(horizon, split, p["amplitude"], p["gap"] * p["sigma_eps"])
    group_of = (np.arange(n_subjects) >= n_subjects - n_subjects // 2).astype(int)
    labels = [group_of.copy() for _ in range(horizon)]
    values, labels = _observe(atoms, labels, p["sigma_eps"], rng, shuffle=False)
    streams = [np.arange(n_subjects) for _ in range(horizon)]
    logger.info(f"[Simulate] Due gruppi: {n_subjects} soggetti × {horizon} giorni, divergenza dal giorno {split}")
    params = dict(p, n_subjects=n_subjects, horizon=horizon, split=split, preset="twogroup", seed=seed)
    return GroupedDataset(grid, values, streams=streams), SyntheticTruth(atoms, labels, params)
