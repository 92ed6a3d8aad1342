import numpy as np
import pytest

from src.models.dataset import CovariateGrid, GroupedDataset


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="esegue anche i test marcati slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="serve --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    return CovariateGrid.regular(3)


@pytest.fixture
def small_dataset(small_grid):
    """Tre gruppi con due cluster ben separati."""
    gen = np.random.default_rng(7)
    values = [np.concatenate([gen.normal(-1.0, 0.2, 4), gen.normal(1.0, 0.2, 4)]) for _ in range(small_grid.M)]
    return GroupedDataset(small_grid, values)


@pytest.fixture
def streamed_dataset():
    """Quattro stream osservati su tre slot: gli stream 0, 1 e 2, 3 formano due gruppi."""
    grid = CovariateGrid.regular(3)
    values = [np.array([-1.0, -1.1, 1.0, 1.1]) for _ in range(3)]
    streams = [np.array([0, 1, 2, 3]) for _ in range(3)]
    return GroupedDataset(grid, values, streams=streams)
