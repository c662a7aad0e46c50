import numpy as np
import pytest


def cubic_quantile(u):
    """Ground-truth quantile function used across the simulation tests."""
    u = np.asarray(u, dtype=float)
    return 4.0 * (u - 0.4) ** 3 + 0.2 * u


def cubic_sample(n, seed):
    """Draw n observations whose quantile function is cubic_quantile."""
    rng = np.random.default_rng(seed)
    return cubic_quantile(rng.random(n))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
