import numpy as np
import pytest

from cs3vm.dataset import Instance
from cs3vm.models import PenaltyConfig


@pytest.fixture
def oned():
    """Labeled -1 (neg) and +1 (pos); unlabeled -0.5, 0.5, 2 with two positives among them."""
    return Instance.build([[-1.0], [1.0]], [-1, 1], [[-0.5], [0.5], [2.0]], 2, y_unl=[-1, 1, 1], name="oned")


@pytest.fixture
def pen():
    return PenaltyConfig(1.0, 1.0)


def assert_close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
