"""Pipeline di simulazione: genera un dataset e scrive griglia, dati e verità."""

import logging
import os
from typing import Dict, Optional

from src.simulation.generators import gen_dataset_A, gen_dataset_B, gen_two_group
from src.utils.config import DATA_FILENAME, GRID_FILENAME, TRUTH_FILENAME
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

SIMULATION_PRESETS = ["A", "B", "twogroup"]


def run_simulate(
    preset: str,
    seed: int,
    out_dir: str,
    subjects: Optional[int] = None,
    horizon: Optional[int] = None,
    split: Optional[int] = None,
) -> Dict[str, str]:
    """
    Genera il dataset del preset e lo salva in out_dir.

    Args:
        preset: A, B o twogroup
        seed: Seed del generatore
        out_dir: Directory di output
        subjects, horizon, split: Solo per twogroup

    Returns:
        Path dei file scritti (grid, data, truth)

    Raises:
        ConfigError: Se il preset è sconosciuto o riceve opzioni non sue
    """
    if preset not in SIMULATION_PRESETS:
        raise ConfigError(f"'preset': atteso uno tra {SIMULATION_PRESETS}, trovato {preset!r}")
    extras = {"subjects": subjects, "horizon": horizon, "split": split}
    if preset == "twogroup":
        kwargs = {"n_subjects": subjects, "horizon": horizon, "split": split}
        data, truth = gen_two_group(seed, **{k: v for k, v in kwargs.items() if v is not None})
    else:
        given = [k for k, v in extras.items() if v is not None]
        if given:
            raise ConfigError(f"'{given[0]}': opzione valida solo per il preset twogroup")
        data, truth = (gen_dataset_A if preset == "A" else gen_dataset_B)(seed)

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "grid": os.path.join(out_dir, GRID_FILENAME),
        "data": os.path.join(out_dir, DATA_FILENAME),
        "truth": os.path.join(out_dir, TRUTH_FILENAME),
    }
    data.grid.to_csv(paths["grid"])
    data.to_csv(paths["data"])
    truth.to_json(paths["truth"])
    logger.info(f"[Simulate] ✓ Preset {preset} (seed {seed}): {data.N} osservazioni salvate in {out_dir}")
    return paths
