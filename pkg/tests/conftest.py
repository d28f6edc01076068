import numpy as np
import pytest


def golden_d16():
    """Two-class, d=16 trusted reference set (seed 7), 300 points per class."""
    rng = np.random.default_rng(7)
    means = np.zeros((2, 16))
    means[1, :2] = 2.0
    y = np.repeat([0, 1], 300)
    X = means[y] + rng.standard_normal((600, 16))
    return X, y


@pytest.fixture
def golden():
    return golden_d16()
