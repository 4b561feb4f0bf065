import numpy as np
import pytest

from qfmed import Grid


@pytest.fixture
def grid100():
    return Grid(100)


@pytest.fixture
def grid1000():
    return Grid(1000)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def seeds_from(root: int, count: int):
    """Independent integer seeds, stable across runs."""
    return [int(c.generate_state(2, np.uint64)[0]) for c in np.random.SeedSequence(root).spawn(count)]
