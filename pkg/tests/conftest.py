import numpy as np
import pytest

from kahlerkit._random import stream
from kahlerkit.manifold.calculus import flat_metric, reference_metric
from kahlerkit.manifold.grids import ChartGrid, TorusGrid


@pytest.fixture(scope="session")
def flat1():
    return flat_metric(TorusGrid(1, 32))


@pytest.fixture(scope="session")
def flat2():
    return flat_metric(TorusGrid(2, 16))


@pytest.fixture(scope="session")
def fs1():
    return reference_metric(ChartGrid())


@pytest.fixture
def rng():
    return stream(12345, 0)


def random_matrix(rng, n, batch=()):
    shape = tuple(batch) + (n, n)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel_err(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(float(np.max(np.abs(b))), 1e-300))
