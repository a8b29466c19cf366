"""Kernel backend selection and shared compositions.

The only primitive that matters for speed is the batched Hermitian
eigendecomposition; everything else here is a thin numpy composition on
top of whichever backend got selected.  Set QELAB_FORCE_FALLBACK=1 to
skip the compiled extension.
"""

import os

import numpy as np

if os.environ.get("QELAB_FORCE_FALLBACK"):
    from . import fallback as _impl
else:
    try:
        from . import _cykernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import fallback as _impl

backend = _impl.name

eigh_batch = _impl.eigh_batch


def recombine(w, v):
    """V diag(w) V^dagger for batched eigendecompositions."""
    return (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def expm_herm(a):
    """Matrix exponential of a Hermitian stack."""
    w, v = eigh_batch(a)
    m = recombine(np.exp(w), v)
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def density_from_log(g):
    """exp(G)/tr exp(G) for a stack of Hermitian log-weights.

    Shift-stabilized so arbitrarily scaled logs are safe.
    """
    w, v = eigh_batch(g)
    w = w - w[..., -1:]
    e = np.exp(w)
    e = e / e.sum(axis=-1, keepdims=True)
    m = recombine(e, v)
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
