import numpy as np
import pytest

from swarmlift.model import SystemConfig


@pytest.fixture
def cfg3():
    """Bench-scale system: three 320 g robots, 200 g payload, 1.2 m cables."""
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def finite_difference(fun, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x.flat[i]))
        xp = x.copy(); xp.flat[i] += step
        xm = x.copy(); xm.flat[i] -= step
        g.flat[i] = (fun(xp) - fun(xm)) / (2 * step)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), floor)
