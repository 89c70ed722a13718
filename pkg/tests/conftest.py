"""
Shared fixtures for the estavg test suite.
"""
import numpy as np
import pytest

from estavg.models import preset_spec, simulate
from estavg.schemas import GermGrainSet, MseMatrix, PointPattern, Window
from estavg.streams import stream


def random_spd(rng: np.random.Generator, m: int) -> np.ndarray:
    """Well-conditioned random symmetric positive definite matrix."""
    a = rng.normal(size=(m, m))
    return a @ a.T + 0.1 * m * np.eye(m)


def mse(arr, labels=None) -> MseMatrix:
    arr = np.asarray(arr, dtype=float)
    labels = labels or [f"e{i}" for i in range(arr.shape[0])]
    return MseMatrix.from_array(labels, arr)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def unit_window() -> Window:
    return Window.unit()


@pytest.fixture
def poisson_pattern() -> PointPattern:
    """Seeded homogeneous Poisson pattern with intensity 100 on the unit square."""
    spec, window = preset_spec("poisson1")
    return simulate(spec, window, stream(7, 0, 0))


@pytest.fixture
def boolean_set() -> GermGrainSet:
    """Seeded Boolean model with rho = 100 and alpha = 1 on the unit square."""
    spec, window = preset_spec("boolean100")
    return simulate(spec, window, stream(11, 0, 0))


@pytest.fixture
def thomas_pattern() -> PointPattern:
    spec, window = preset_spec("thomas1")
    return simulate(spec, window, stream(5, 0, 0))
