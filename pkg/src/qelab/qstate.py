"""States, binary measurements, and the entropy/divergence toolbox.

Covers density operators, pure states, single-effect measurements,
classical-quantum states, trace distance with its optimal-effect
witness, the max-relative divergence, min-entropies (unconditional,
conditional via SDP, worst-case), guessing probability with an optimal
measurement, delta-density, and Umegaki divergence.  Quantities that
can be infinite are returned as tagged extended reals, never as
sentinel floats.
"""

import json
import math

import numpy as np

from . import solvers
from .opalg import (
    HermitianOperator,
    herm_eig,
    mat_of,
    partial_trace,
    tensor,
    trace_inner,
)

EIG_ATOL = 1e-9          # spectrum gates on construction
TRACE_ATOL = 1e-9
NORM_ATOL = 1e-10
SUPPORT_RTOL = 1e-9      # relative eigenvalue cutoff defining supports
PROB_ATOL = 1e-9

LOG2 = math.log(2.0)


class StateError(ValueError):
    pass


# ---------------------------------------------------------------------------
# extended reals
# ---------------------------------------------------------------------------

class ExtReal:
    """Tagged extended real: finite(x) or +infinity."""

    __slots__ = ("is_finite", "_value")

    def __init__(self, value=None, *, infinite=False):
        if infinite:
            object.__setattr__(self, "is_finite", False)
            object.__setattr__(self, "_value", None)
        else:
            object.__setattr__(self, "is_finite", True)
            object.__setattr__(self, "_value", float(value))

    def __setattr__(self, name, value):
        raise AttributeError("ExtReal is immutable")

    @classmethod
    def finite(cls, x):
        return cls(x)

    @classmethod
    def infinity(cls):
        return cls(infinite=True)

    @property
    def value(self):
        if not self.is_finite:
            raise StateError("value of +infinity requested")
        return self._value

    def __float__(self):
        return self.value

    def _cmp_key(self):
        return (1, 0.0) if not self.is_finite else (0, self._value)

    @staticmethod
    def _coerce(other):
        if isinstance(other, ExtReal):
            return other
        return ExtReal(float(other))

    def __eq__(self, other):
        try:
            o = self._coerce(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self._cmp_key() == o._cmp_key()

    def __lt__(self, other):
        o = self._coerce(other)
        return self._cmp_key() < o._cmp_key()

    def __le__(self, other):
        o = self._coerce(other)
        return self._cmp_key() <= o._cmp_key()

    def __gt__(self, other):
        return not self.__le__(other)

    def __ge__(self, other):
        return not self.__lt__(other)

    def __hash__(self):
        return hash(self._cmp_key())

    def __repr__(self):
        return "ExtReal(+inf)" if not self.is_finite else f"ExtReal({self._value!r})"


# ---------------------------------------------------------------------------
# state and measurement types
# ---------------------------------------------------------------------------

class DensityOperator:
    """Hermitian, PSD up to -1e-9, unit trace up to 1e-9."""

    __slots__ = ("op",)

    def __init__(self, mat):
        op = mat if isinstance(mat, HermitianOperator) else HermitianOperator(mat)
        w = op.eig().eigenvalues
        if w[-1] < -EIG_ATOL:
            raise StateError(f"not PSD: min eigenvalue {w[-1]:.3e}")
        tr = float(np.real(np.trace(op.mat)))
        if abs(tr - 1.0) > TRACE_ATOL:
            raise StateError(f"trace {tr!r} not 1 within {TRACE_ATOL}")
        object.__setattr__(self, "op", op)

    def __setattr__(self, name, value):
        raise AttributeError("DensityOperator is immutable")

    @property
    def mat(self):
        return self.op.mat

    @property
    def dim(self):
        return self.op.dim

    def eig(self):
        return self.op.eig()

    @classmethod
    def maximally_mixed(cls, dim):
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    @classmethod
    def from_probs(cls, probs):
        p = np.asarray(probs, dtype=np.float64)
        return cls(np.diag(p.astype(np.complex128)))

    def __repr__(self):
        return f"DensityOperator(dim={self.dim})"


class PureState:
    """Unit vector, norm within 1e-10; density() gives the projector."""

    __slots__ = ("ket",)

    def __init__(self, ket):
        v = np.asarray(ket, dtype=np.complex128).reshape(-1)
        nrm = float(np.linalg.norm(v))
        if abs(nrm - 1.0) > NORM_ATOL:
            raise StateError(f"norm {nrm!r} not 1 within {NORM_ATOL}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "ket", v)

    def __setattr__(self, name, value):
        raise AttributeError("PureState is immutable")

    @property
    def dim(self):
        return self.ket.shape[0]

    @classmethod
    def basis(cls, dim, index):
        v = np.zeros(dim, dtype=np.complex128)
        v[index] = 1.0
        return cls(v)

    def density(self):
        return DensityOperator(np.outer(self.ket, self.ket.conj()))

    def __repr__(self):
        return f"PureState(dim={self.dim})"


class Bpovm:
    """Single measurement effect: 0 <= Pi <= I up to 1e-9."""

    __slots__ = ("op",)

    def __init__(self, mat):
        op = mat if isinstance(mat, HermitianOperator) else HermitianOperator(mat)
        w = op.eig().eigenvalues
        if w[-1] < -EIG_ATOL or w[0] > 1.0 + EIG_ATOL:
            raise StateError(
                f"effect spectrum [{w[-1]:.3e}, {w[0]:.3e}] outside [0, 1]")
        object.__setattr__(self, "op", op)

    def __setattr__(self, name, value):
        raise AttributeError("Bpovm is immutable")

    @property
    def mat(self):
        return self.op.mat

    @property
    def dim(self):
        return self.op.dim

    def complement(self):
        return Bpovm(np.eye(self.dim) - self.mat)

    def accept_prob(self, state):
        return float(np.clip(trace_inner(self.mat, mat_of(state)), 0.0, 1.0))

    def __repr__(self):
        return f"Bpovm(dim={self.dim})"


class CqState:
    """Classical-quantum state: labeled support, probs, conditional states."""

    __slots__ = ("support", "probs", "states")

    def __init__(self, support, probs, states):
        support = tuple(support)
        p = np.asarray(probs, dtype=np.float64)
        if len(support) != p.shape[0] or len(support) != len(states):
            raise StateError("support, probs, states lengths differ")
        if np.any(p < -PROB_ATOL):
            raise StateError("negative probability")
        if abs(float(p.sum()) - 1.0) > PROB_ATOL:
            raise StateError(f"probabilities sum to {p.sum()!r}")
        sts = tuple(s if isinstance(s, DensityOperator) else DensityOperator(s)
                    for s in states)
        dims = {s.dim for s in sts}
        if len(dims) > 1:
            raise StateError(f"conditional states have mixed dims {dims}")
        p = np.clip(p, 0.0, None)
        p.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "states", sts)

    def __setattr__(self, name, value):
        raise AttributeError("CqState is immutable")

    @property
    def nsymbols(self):
        return len(self.support)

    @property
    def dim_b(self):
        return self.states[0].dim

    def blocks(self):
        """Weighted conditional blocks p_x * rho_x as one (K, d, d) stack."""
        return self.probs[:, None, None] * np.stack([s.mat for s in self.states])

    def joint(self):
        """Block-diagonal joint density on X (x) B."""
        k, d = self.nsymbols, self.dim_b
        out = np.zeros((k * d, k * d), dtype=np.complex128)
        for i, (pi, s) in enumerate(zip(self.probs, self.states)):
            out[i * d:(i + 1) * d, i * d:(i + 1) * d] = pi * s.mat
        return DensityOperator(out)

    def marginal_b(self):
        return DensityOperator(np.einsum("k,kij->ij", self.probs,
                                         np.stack([s.mat for s in self.states])))

    def __repr__(self):
        return f"CqState(|X|={self.nsymbols}, dim_b={self.dim_b})"


# ---------------------------------------------------------------------------
# distances and divergences
# ---------------------------------------------------------------------------

class TraceDistanceResult(float):
    """Trace distance value; carries the optimal distinguishing effect."""

    def __new__(cls, value, effect, attained):
        obj = super().__new__(cls, value)
        obj.effect = effect
        obj.attained = attained
        return obj


def trace_distance(rho, sigma):
    """T(rho, sigma) = max over effects of <Pi, rho - sigma>.

    Returns the value together with the maximizing effect (projector on
    the nonnegative eigenspace of rho - sigma) and the value it attains.
    """
    delta = mat_of(rho) - mat_of(sigma)
    dec = herm_eig(delta)
    w, v = dec.eigenvalues, dec.eigenvectors
    value = 0.5 * float(np.sum(np.abs(w)))
    pos = w > 0
    proj = (v[:, pos] @ v[:, pos].conj().T) if np.any(pos) \
        else np.zeros_like(delta)
    effect = Bpovm(proj)
    attained = trace_inner(proj, delta)
    return TraceDistanceResult(value, effect, attained)


def _support_basis(mat):
    dec = herm_eig(mat)
    w, v = dec.eigenvalues, dec.eigenvectors
    cutoff = SUPPORT_RTOL * max(float(w[0]), 0.0)
    keep = w > cutoff
    return w[keep], v[:, keep]


def d_infinity(rho, sigma):
    """Max-relative divergence D_inf(rho || sigma) in bits, extended real."""
    r, s = mat_of(rho), mat_of(sigma)
    w, v = _support_basis(s)
    if w.size == 0:
        return ExtReal.infinity()
    outside = np.eye(s.shape[0], dtype=np.complex128) - v @ v.conj().T
    mass = trace_inner(outside, r)
    if mass > SUPPORT_RTOL:
        return ExtReal.infinity()
    core = v.conj().T @ r @ v
    m = core / np.sqrt(w)[None, :] / np.sqrt(w)[:, None]
    top = herm_eig(m).eigenvalues[0]
    return ExtReal(math.log2(max(top, 1e-300)))


def h_min(state):
    """Unconditional min-entropy -log2 lambda_max, in bits."""
    top = herm_eig(mat_of(state)).eigenvalues[0]
    return -math.log2(max(top, 1e-300))


def h_min_cond(state, dims=None, gap_tol=solvers.GAP_TOL):
    """Conditional min-entropy H_min(X|B) in bits.

    Accepts a CqState, or a bipartite DensityOperator with dims=(dX, dB).
    Solved as min tr Y s.t. I (x) Y >= rho via the in-repo ADMM; the
    entropy is -log2 of the optimal trace.  Entangled states give
    negative values.
    """
    if isinstance(state, CqState):
        value, _, _, _ = solvers.min_trace_dominating(state.blocks(),
                                                      gap_tol=gap_tol)
    else:
        if dims is None:
            raise StateError("dims=(dX, dB) required for a bipartite density")
        dx, db = int(dims[0]), int(dims[1])
        value, _, _, _ = solvers.min_trace_bipartite(mat_of(state), dx, db,
                                                     gap_tol=gap_tol)
    return -math.log2(max(value, 1e-300))


def p_guess(cq, gap_tol=solvers.GAP_TOL):
    """Optimal guessing probability and a measurement attaining it.

    Returns (value, povm) where povm is a list of PSD effects summing
    to the identity; -log2(value) equals h_min_cond on the same state.
    """
    if not isinstance(cq, CqState):
        raise StateError("p_guess needs a CqState")
    blocks = cq.blocks()
    _, _, lam, _ = solvers.min_trace_dominating(blocks, gap_tol=gap_tol)
    # tidy the multipliers into an exact POVM
    k, d = lam.shape[0], lam.shape[-1]
    lam = np.stack([solvers.clip_psd(l) for l in lam])
    total = lam.sum(axis=0)
    dec = herm_eig(total)
    w = np.maximum(dec.eigenvalues, 1e-12)
    v = dec.eigenvectors
    isq = (v / w[None, :] ** 0.5) @ v.conj().T
    lam = np.einsum("ij,kjl,lm->kim", isq, lam, isq)
    resid = np.eye(d) - lam.sum(axis=0)
    lam = lam + resid[None, :, :] / k
    value = float(sum(trace_inner(blocks[i], lam[i]) for i in range(k)))
    povm = [0.5 * (l + l.conj().T) for l in lam]
    return value, povm


def h_min_worst(cq):
    """Worst-case over symbols of the conditional-state min-entropy."""
    if not isinstance(cq, CqState):
        raise StateError("h_min_worst needs a CqState")
    return min(h_min(s) for s in cq.states)


def is_delta_dense(sigma, rho, delta):
    """Whether sigma <= rho / delta (sigma is delta-dense in rho)."""
    if not 0.0 < delta <= 1.0:
        raise StateError(f"delta {delta!r} outside (0, 1]")
    gap = mat_of(rho) / delta - mat_of(sigma)
    return herm_eig(gap).eigenvalues[-1] >= -EIG_ATOL


def qkl(rho, sigma):
    """Umegaki divergence D(rho || sigma) in bits, extended real.

    +infinity when rho has support outside sigma's (decided with the
    same relative cutoff as d_infinity).
    """
    r, s = mat_of(rho), mat_of(sigma)
    sw, sv = _support_basis(s)
    if sw.size < s.shape[0]:
        proj_out = np.eye(s.shape[0], dtype=np.complex128) - sv @ sv.conj().T
        if trace_inner(proj_out, r) > SUPPORT_RTOL:
            return ExtReal.infinity()
    rw, _ = _support_basis(r)
    ent = float(np.sum(rw * np.log2(rw)))                    # tr rho log rho
    diag = np.real(np.einsum("ji,jk,ki->i", sv.conj(), r, sv))
    cross = float(np.sum(diag * np.log2(sw)))                # tr rho log sigma
    return ExtReal(ent - cross)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def _entries(mat):
    return [[float(z.real), float(z.imag)] for z in mat.reshape(-1)]


def _from_entries(entries, dim):
    flat = np.array([complex(re, im) for re, im in entries], dtype=np.complex128)
    return flat.reshape(dim, dim)


def density_to_json(state):
    return json.dumps({"dim": state.dim, "entries": _entries(state.mat)})


def density_from_json(text):
    doc = json.loads(text)
    return DensityOperator(_from_entries(doc["entries"], doc["dim"]))


def effect_to_json(effect):
    return json.dumps({"dim": effect.dim, "entries": _entries(effect.mat)})


def effect_from_json(text):
    doc = json.loads(text)
    return Bpovm(_from_entries(doc["entries"], doc["dim"]))


def cq_to_json(cq):
    return json.dumps({
        "support": list(cq.support),
        "probs": [float(p) for p in cq.probs],
        "dim": cq.dim_b,
        "states": [_entries(s.mat) for s in cq.states],
    })


def cq_from_json(text):
    doc = json.loads(text)
    states = [DensityOperator(_from_entries(e, doc["dim"])) for e in doc["states"]]
    support = [s if isinstance(s, str) else int(s) for s in doc["support"]]
    return CqState(support, doc["probs"], states)
