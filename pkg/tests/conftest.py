import numpy as np
import pytest

from sketchgossip.linalg import SpdMatrix
from sketchgossip.system import LinearSystem


def gaussian(m, n, seed, B=None, rank=None):
    """Consistent Gaussian system b = A z; ``rank`` forces a rank-deficient A."""
    rng = np.random.default_rng(seed)
    if rank is None:
        A = rng.standard_normal((m, n))
    else:
        A = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))
    return LinearSystem(A, A @ rng.standard_normal(n), B)


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    return SpdMatrix.dense(G @ G.T + n * np.eye(n))


@pytest.fixture
def small_system():
    return gaussian(8, 5, 11)


@pytest.fixture
def deficient_system():
    return gaussian(7, 6, 12, rank=3)


@pytest.fixture
def weighted_system():
    return gaussian(6, 4, 13, B=random_spd(4, 14))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
