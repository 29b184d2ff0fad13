import numpy as np
import pytest

from mdel import validate_dataset


def linear_trial(n=60, p=4, seed=0, effect=2.0, noise=1.0):
    """Small trial with a linear outcome model and balanced-ish arms."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    d = np.zeros(n)
    d[rng.permutation(n)[: n // 2]] = 1
    beta = np.linspace(1.0, 0.2, p)
    y = x @ beta + effect * d + noise * rng.standard_normal(n)
    return validate_dataset(y, d, x)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def trial():
    return linear_trial()
