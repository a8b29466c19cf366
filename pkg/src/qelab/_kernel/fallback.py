"""Pure numpy implementation of the hot kernels.

Selected by qelab._kernel when the compiled extension is unavailable or
QELAB_FORCE_FALLBACK is set.  Same contract as _cykernel: Hermitian
input, ascending eigenvalues, eigenvectors in columns.
"""

import numpy as np

name = "fallback"


def eigh_batch(a):
    """Eigendecomposition of a stack of Hermitian matrices.

    a : (..., d, d) complex128
    returns (w, v) with w (..., d) ascending and v[..., :, i] the
    eigenvector for w[..., i].
    """
    return np.linalg.eigh(a)
