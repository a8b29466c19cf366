"""Dense Hermitian operator algebra on small Hilbert spaces.

Everything downstream (states, games, solvers) is built on the handful
of primitives here: validated Hermitian wrappers, spectral calculus,
tensor/partial-trace index calculus, and the three norms we ever need.
Matrices are plain complex128 ndarrays underneath; wrappers are
immutable and all operations are pure.
"""

import numpy as np

from . import _kernel

MAX_DIM = 4096
HERM_ATOL = 1e-10      # construction gate on ||M - M^dagger||_max
LOG_FLOOR = 1e-300     # eigenvalue floor inside herm_log


class OpalgError(ValueError):
    pass


def _as_square(mat):
    m = np.asarray(mat, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise OpalgError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[0] > MAX_DIM:
        raise OpalgError(f"dimension {m.shape[0]} outside [1, {MAX_DIM}]")
    if not np.all(np.isfinite(m.view(np.float64))):
        raise OpalgError("matrix has non-finite entries")
    return m


def _frozen(m):
    m = np.ascontiguousarray(m)
    m.flags.writeable = False
    return m


class HermitianOperator:
    """Validated Hermitian matrix.

    Construction symmetrizes (M + M^dagger)/2 after checking the input
    is Hermitian to HERM_ATOL in max norm.  The stored array is
    read-only; arithmetic returns new objects.
    """

    __slots__ = ("mat", "_eig")

    def __init__(self, mat, *, _skip_check=False):
        m = _as_square(mat)
        if not _skip_check:
            dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
            if dev > HERM_ATOL:
                raise OpalgError(f"not Hermitian: ||M - M^dagger||_max = {dev:.3e}")
        object.__setattr__(self, "mat", _frozen(0.5 * (m + m.conj().T)))
        object.__setattr__(self, "_eig", None)

    def __setattr__(self, name, value):
        raise AttributeError("HermitianOperator is immutable")

    @property
    def dim(self):
        return self.mat.shape[0]

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros((dim, dim), dtype=np.complex128), _skip_check=True)

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim, dtype=np.complex128), _skip_check=True)

    @classmethod
    def from_diag(cls, diag):
        return cls(np.diag(np.asarray(diag, dtype=np.complex128)), _skip_check=True)

    def eig(self):
        if self._eig is None:
            object.__setattr__(self, "_eig", herm_eig(self.mat))
        return self._eig

    def __array__(self, dtype=None, copy=None):
        return np.array(self.mat, dtype=dtype or np.complex128)

    def __add__(self, other):
        return HermitianOperator(self.mat + mat_of(other), _skip_check=True)

    def __sub__(self, other):
        return HermitianOperator(self.mat - mat_of(other), _skip_check=True)

    def __mul__(self, scalar):
        s = complex(scalar)
        if abs(s.imag) > 0:
            raise OpalgError("scaling a Hermitian operator needs a real scalar")
        return HermitianOperator(s.real * self.mat, _skip_check=True)

    __rmul__ = __mul__

    def __neg__(self):
        return HermitianOperator(-self.mat, _skip_check=True)

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


def mat_of(x):
    """ndarray view of an operator-like argument."""
    if isinstance(x, HermitianOperator):
        return x.mat
    if hasattr(x, "mat") and isinstance(getattr(x, "mat"), np.ndarray):
        return x.mat
    return np.asarray(x, dtype=np.complex128)


class SpectralDecomposition:
    """Eigensystem of a Hermitian matrix, eigenvalues descending."""

    __slots__ = ("eigenvalues", "eigenvectors")

    def __init__(self, eigenvalues, eigenvectors):
        object.__setattr__(self, "eigenvalues", _frozen(np.asarray(eigenvalues, dtype=np.float64)))
        object.__setattr__(self, "eigenvectors", _frozen(np.asarray(eigenvectors, dtype=np.complex128)))

    def __setattr__(self, name, value):
        raise AttributeError("SpectralDecomposition is immutable")

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues[None, :]) @ v.conj().T

    def apply(self, fn):
        """V diag(fn(lambda)) V^dagger as an ndarray."""
        fw = np.asarray([fn(x) for x in self.eigenvalues], dtype=np.float64)
        v = self.eigenvectors
        m = (v * fw[None, :]) @ v.conj().T
        return 0.5 * (m + m.conj().T)


def herm_eig(m):
    """Spectral decomposition with descending eigenvalues."""
    a = mat_of(m)
    _as_square(a)
    w, v = _kernel.eigh_batch(0.5 * (a + a.conj().T))
    return SpectralDecomposition(w[::-1].copy(), v[:, ::-1].copy())


def herm_fn(m, fn):
    """Apply a scalar function to the eigenvalues of a Hermitian matrix."""
    return herm_eig(m).apply(fn)


def herm_exp(m):
    a = mat_of(m)
    return _kernel.expm_herm(0.5 * (a + a.conj().T))


def herm_log(m):
    """Matrix logarithm with eigenvalues floored at LOG_FLOOR."""
    return herm_fn(m, lambda x: np.log(max(x, LOG_FLOOR)))


def trace_inner(a, b):
    """Hilbert-Schmidt inner product tr(A^dagger B), real part.

    For Hermitian arguments the value is exactly real; the imaginary
    part is discarded.
    """
    return float(np.real(np.sum(np.conj(mat_of(a)) * mat_of(b))))


def trace_norm(m):
    return float(np.sum(np.abs(_eigvals(m))))


def op_norm(m):
    w = _eigvals(m)
    return float(np.max(np.abs(w))) if w.size else 0.0


def max_abs_entry(m):
    a = mat_of(m)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _eigvals(m):
    a = mat_of(m)
    _as_square(a)
    w, _ = _kernel.eigh_batch(0.5 * (a + a.conj().T))
    return w


def tensor(*ops):
    """Kronecker product, dimension-capped."""
    if not ops:
        raise OpalgError("tensor of nothing")
    total = 1
    for o in ops:
        total *= mat_of(o).shape[0]
    if total > MAX_DIM:
        raise OpalgError(f"tensor dimension {total} exceeds {MAX_DIM}")
    out = mat_of(ops[0])
    for o in ops[1:]:
        out = np.kron(out, mat_of(o))
    return out


def partial_trace(m, dims, keep):
    """Trace out all factors not listed in keep.

    dims : tuple of factor dimensions, product equal to the matrix dim.
    keep : iterable of factor indices to retain, in ascending order.
    """
    a = mat_of(m)
    dims = tuple(int(d) for d in dims)
    if int(np.prod(dims)) != a.shape[0]:
        raise OpalgError(f"dims {dims} do not factor dimension {a.shape[0]}")
    keep = tuple(sorted(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise OpalgError(f"keep {keep} out of range for {len(dims)} factors")
    n = len(dims)
    t = a.reshape(dims + dims)
    # trace out factors back to front so axis numbers stay valid
    for ax in reversed(range(n)):
        if ax not in keep:
            t = np.trace(t, axis1=ax, axis2=ax + (t.ndim // 2))
    kept = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(kept, kept)
