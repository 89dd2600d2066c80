import numpy as np
import pytest

from aimer.screening import center


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_dataset(seed, n=40, p=12, signal=3, noise=0.5):
    """Small regression dataset with a known sparse signal on leading columns."""
    gen = np.random.default_rng(seed)
    x = gen.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:signal] = gen.uniform(0.5, 2.0, size=signal)
    y = x @ beta + noise * gen.standard_normal(n) + gen.uniform(-1, 1)
    return center(x, y), beta
