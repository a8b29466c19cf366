import numpy as np
import pytest

from qelab import _kernel


def random_herm(rng, d, scale=1.0):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * 0.5 * (g + g.conj().T)


def random_density(rng, d, rank=None):
    r = rank or d
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    m = g @ g.conj().T
    return m / np.real(np.trace(m))


def random_effect(rng, d):
    w, v = _kernel.eigh_batch(random_herm(rng, d))
    u = rng.uniform(0.0, 1.0, size=d)
    return (v * u[None, :]) @ v.conj().T


def random_pure(rng, d):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
