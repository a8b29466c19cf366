import numpy as np
import pytest

from qelab import _kernel
from qelab._kernel import fallback

from .conftest import random_herm


def _backends():
    names = [fallback]
    try:
        from qelab._kernel import _cykernel
        names.append(_cykernel)
    except ImportError:
        pass
    return names


@pytest.mark.parametrize("impl", _backends(), ids=lambda m: m.name)
def test_eigh_batch_matches_numpy(impl, rng):
    for shape in [(3, 3), (1, 5, 5), (4, 2, 2), (2, 3, 16, 16)]:
        a = np.stack([random_herm(rng, shape[-1])
                      for _ in range(int(np.prod(shape[:-2])) or 1)])
        a = a.reshape(shape) if len(shape) > 2 else a[0]
        w, v = impl.eigh_batch(a)
        w_ref, _ = np.linalg.eigh(a)
        assert np.allclose(w, w_ref, atol=1e-10)
        rec = (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
        assert np.max(np.abs(rec - a)) <= 1e-8 * shape[-1]


def test_backends_agree(rng):
    impls = _backends()
    if len(impls) < 2:
        pytest.skip("compiled kernel not built")
    a = np.stack([random_herm(rng, 6) for _ in range(5)])
    w0, _ = impls[0].eigh_batch(a)
    w1, _ = impls[1].eigh_batch(a)
    assert np.allclose(w0, w1, atol=1e-10)


def test_density_from_log_normalizes(rng):
    g = np.stack([random_herm(rng, 4, scale=50.0) for _ in range(3)])
    rho = _kernel.density_from_log(g)
    for r in rho:
        assert np.real(np.trace(r)) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(r).min() >= -1e-12
    # shift invariance: adding c*I changes nothing
    rho2 = _kernel.density_from_log(g + 123.0 * np.eye(4))
    assert np.max(np.abs(rho - rho2)) <= 1e-12


def test_expm_herm_identity():
    z = np.zeros((3, 3), dtype=np.complex128)
    assert np.allclose(_kernel.expm_herm(z), np.eye(3), atol=1e-14)
