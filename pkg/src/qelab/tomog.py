"""Black-box measurement learning: acceptance estimation, effect
reconstruction, best-input search, explicit covering nets, and
sampling-based derandomization of circuit mixtures.

The oracle model is a distinguisher that, queried with a state, flips
a coin with the acceptance probability of a hidden binary effect.
Every algorithm below touches the oracle only through query(); the
hidden effect itself is harness-side ground truth for audits.
"""

import math

import numpy as np

from . import solvers
from ._kernel import eigh_batch, recombine
from .opalg import herm_eig, mat_of
from .qstate import Bpovm, PureState
from .rng import ensure_rng

CHERNOFF_CONST = 8.0       # two-sided Hoeffding with slack, fixed once
NET_EXPONENT = 4           # recorded K: |net| <= (1/eps)^(K d) resp. (1/eps)^(K d^2)
NET_MIN_EPS = 0.05
NET_MAX_EPS = 0.5
NET_MAX_DIM = 3
NET_STORED_CAP = 1_000_000  # points kept in an explicit net
NET_ENUM_CAP = 6_000_000   # raw lattice points enumerated while building
DYKSTRA_MAX_SWEEPS = 5000
DERAND_MAX_RETRIES = 64


class CapacityError(RuntimeError):
    """An explicit construction would exceed the desk-scale guards."""


# ---------------------------------------------------------------------------
# Sampling oracle
# ---------------------------------------------------------------------------

class SamplingDistinguisher:
    """Binary-outcome oracle around a hidden effect.

    Algorithms may only call query(); .effect exists for the harness
    that planted it.  The instance owns a private stream and a running
    query counter, so it belongs to a single owner (clone with a fresh
    seed for parallel work).  With exact=True a query returns the
    fractional expectation n*p instead of a sampled count
    (infinite-sample semantics); the counter advances either way.
    """

    def __init__(self, effect, seed=0, exact=False):
        self.effect = effect if isinstance(effect, Bpovm) else Bpovm(effect)
        self.exact = bool(exact)
        self._rng = ensure_rng(seed, "distinguisher")
        self.query_count = 0

    @property
    def dim(self):
        return self.effect.dim

    def query(self, state, n=1):
        """Number of accepting outcomes among n independent runs."""
        n = int(n)
        if n < 1:
            raise ValueError("query batch size must be >= 1")
        p = self.effect.accept_prob(state)
        self.query_count += n
        if self.exact:
            return p * n
        return int(self._rng.binomial(n, p))


def value_sample_count(eps, gamma):
    """Batch size ceil(8 ln(2/gamma) / eps^2) for a two-sided estimate."""
    return int(math.ceil(CHERNOFF_CONST * math.log(2.0 / gamma) / (eps * eps)))


def qckt_value(dist, state, eps, gamma):
    """Estimate the acceptance probability on state to within eps,
    failing with probability at most gamma."""
    if not 0.0 < eps < 1.0 or not 0.0 < gamma < 1.0:
        raise ValueError("eps and gamma must lie in (0, 1)")
    t = value_sample_count(eps, gamma)
    return dist.query(state, t) / t


# ---------------------------------------------------------------------------
# Effect reconstruction
# ---------------------------------------------------------------------------

def _pairs(dim):
    return [(n, m) for n in range(dim) for m in range(n + 1, dim)]


def probe_states(dim):
    """The dim^2 pure probe states, stacked (dim^2, dim, dim).

    Order: basis projectors |n><n|, then the +1 superpositions of each
    pair n < m, then the +i superpositions, pairs lexicographic.  Their
    expectations determine a Hermitian matrix uniquely.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    pairs = _pairs(dim)
    out = np.zeros((dim * dim, dim, dim), dtype=np.complex128)
    for n in range(dim):
        out[n, n, n] = 1.0
    s = 1.0 / math.sqrt(2.0)
    for j, (n, m) in enumerate(pairs):
        v = np.zeros(dim, dtype=np.complex128)
        v[n] = s
        v[m] = s
        out[dim + j] = np.outer(v, v.conj())
        v[m] = 1j * s
        out[dim + len(pairs) + j] = np.outer(v, v.conj())
    return out


def probe_values(effect, probes=None):
    """True expectation of each probe against an effect (harness side)."""
    a = mat_of(effect)
    if probes is None:
        probes = probe_states(a.shape[0])
    return np.real(np.einsum("kij,ji->k", probes, a))


def reconstruct_effect(alphas, dim):
    """Invert the probe map: the unique Hermitian matrix with the given
    probe expectations.  No positivity is enforced here."""
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.shape != (dim * dim,):
        raise ValueError(f"need {dim * dim} probe values, got {alphas.shape}")
    out = np.zeros((dim, dim), dtype=np.complex128)
    out[np.diag_indices(dim)] = alphas[:dim]
    pairs = _pairs(dim)
    for j, (n, m) in enumerate(pairs):
        half = 0.5 * (alphas[n] + alphas[m])
        re = alphas[dim + j] - half
        im = half - alphas[dim + len(pairs) + j]
        out[n, m] = re + 1j * im
        out[m, n] = re - 1j * im
    return out


def _feasible_effect(est, probes, eta):
    """Dykstra between the probe slabs |<A_k, Pi> - est_k| <= eta and the
    operator interval 0 <= Pi <= I; stops at combined residual eta/10.

    Each probe has unit Frobenius norm and slab displacements stay
    parallel to the probe, so the slab corrections are scalars; only
    the interval set carries a matrix correction.  Starts from the
    exact inversion of est, which centers every slab.
    """
    dim = probes.shape[-1]
    lo = est - eta
    hi = est + eta
    z = solvers.clip_interval(reconstruct_effect(est, dim), 0.0, 1.0)
    zeta = np.zeros(est.size)
    corr = np.zeros_like(z)
    tol = eta / 10.0

    def residual(m):
        vals = np.real(np.einsum("kij,ji->k", probes, m))
        slab = float(np.max(np.maximum(vals - hi, lo - vals), initial=0.0))
        w = np.linalg.eigvalsh(m)
        box = max(0.0, -float(w[0])) + max(0.0, float(w[-1]) - 1.0)
        return max(slab, 0.0) + box

    best = math.inf
    last_improve = 0
    for sweep in range(1, DYKSTRA_MAX_SWEEPS + 1):
        for k in range(est.size):
            val = float(np.real(np.sum(np.conj(probes[k]) * z))) + zeta[k]
            clamped = min(max(val, lo[k]), hi[k])
            z = z + (zeta[k] - (val - clamped)) * probes[k]
            zeta[k] = val - clamped
        w = z + corr
        z = solvers.clip_interval(w, 0.0, 1.0)
        corr = w - z
        res = residual(z)
        if res <= tol:
            return solvers.clip_interval(z, 0.0, 1.0)
        if res < best * 0.999:
            best = res
            last_improve = sweep
        elif sweep - last_improve >= 300:
            break
    vals = np.real(np.einsum("kij,ji->k", probes, z))
    raise solvers.SolverError(
        "effect feasibility projection stalled",
        residuals={"slab": np.maximum(np.maximum(vals - hi, lo - vals), 0.0),
                   "final": residual(z)})


def _tomography_core(dist, dim, eps, gamma):
    if not 0.0 < eps < 1.0 or not 0.0 < gamma < 1.0:
        raise ValueError("eps and gamma must lie in (0, 1)")
    if dist.dim != dim:
        raise ValueError(f"distinguisher dim {dist.dim} != {dim}")
    eta = eps / (8.0 * dim)
    gamma_each = gamma / (dim * dim)
    probes = probe_states(dim)
    est = np.array([qckt_value(dist, probes[k], eta, gamma_each)
                    for k in range(dim * dim)])
    out = _feasible_effect(est, probes, eta)
    resid = np.abs(np.real(np.einsum("kij,ji->k", probes, out)) - est)
    return out, resid


def qckt_tomography(dist, dim, eps, gamma):
    """Reconstruct the hidden effect to operator norm eps, failing with
    probability at most gamma, from acceptance samples alone.

    Estimates the dim^2 probe expectations to eta = eps/(8 dim) with
    per-estimate failure gamma/dim^2, then returns a feasible point of
    the slab/interval program; any feasible point is within 2*eta of
    the truth entrywise, hence within eps in operator norm.
    """
    out, _ = _tomography_core(dist, dim, eps, gamma)
    return Bpovm(out)


def tomography_report(dist, dim, eps, gamma):
    """Run tomography and package a JSON-ready report dict."""
    before = dist.query_count
    out, resid = _tomography_core(dist, dim, eps, gamma)
    return {
        "dim": dim,
        "eps": eps,
        "gamma": gamma,
        "queries_used": dist.query_count - before,
        "effect": {"re": out.real.tolist(), "im": out.imag.tolist()},
        "max_norm_residuals": resid.tolist(),
    }


def qckt_max_sat(dist, dim, eps, gamma):
    """Search for a near-optimal input: tomography at eps/2, then the
    projector onto the top eigenvector of the reconstruction."""
    approx = qckt_tomography(dist, dim, eps / 2.0, gamma)
    dec = herm_eig(approx.mat)
    return PureState(dec.eigenvectors[:, 0]).density()


def shift_and_round(mat, shift, grid):
    """Deterministic post-processing hook: add shift*(1+1j) to the strict
    upper triangle (conjugate below), then snap all real and imaginary
    parts to integer multiples of grid.

    Hermiticity is preserved exactly; the output may leave [0, I] by up
    to a grid step, so callers needing a valid effect clip afterwards.
    """
    if grid <= 0.0:
        raise ValueError("grid step must be positive")
    m = np.array(mat, dtype=np.complex128)
    n = m.shape[0]
    iu = np.triu_indices(n, 1)
    m[iu] += shift * (1.0 + 1.0j)
    m[iu[1], iu[0]] += shift * (1.0 - 1.0j)
    return grid * np.round(m.real / grid) + 1j * (grid * np.round(m.imag / grid))


# ---------------------------------------------------------------------------
# Explicit covering nets
# ---------------------------------------------------------------------------

def _opnorm_batch(stack):
    d = stack.shape[-1]
    if d == 1:
        return np.abs(stack[:, 0, 0].real)
    if d == 2:
        a = stack[:, 0, 0].real
        b = stack[:, 1, 1].real
        s = np.sqrt(0.25 * (a - b) ** 2 + np.abs(stack[:, 0, 1]) ** 2)
        return np.abs(0.5 * (a + b)) + s
    w = np.linalg.eigvalsh(stack)
    return np.max(np.abs(w), axis=-1)


class EpsilonNet:
    """Explicit covering of pure states or binary effects.

    Pure states live on the phase quotient and are covered in the
    phase-aligned Euclidean distance sqrt(2 - 2|<phi|psi>|); effects
    are covered in operator norm.  points is (N, d) complex for pure
    states and (N, d, d) for effects.  The recorded exponent certifies
    |net| <= (1/eps)^(K d) resp. (1/eps)^(K d^2).
    """

    __slots__ = ("kind", "dim", "epsilon", "points", "k_exponent")

    def __init__(self, kind, dim, epsilon, points, k_exponent=NET_EXPONENT):
        if kind not in ("pure-states", "bpovm"):
            raise ValueError(f"unknown net kind {kind!r}")
        pts = np.asarray(points, dtype=np.complex128)
        power = k_exponent * dim if kind == "pure-states" else k_exponent * dim * dim
        if pts.shape[0] > (1.0 / epsilon) ** power:
            raise CapacityError(
                f"{pts.shape[0]} points break the recorded cardinality bound")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "epsilon", float(epsilon))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "k_exponent", k_exponent)

    def __setattr__(self, name, value):
        raise AttributeError("EpsilonNet is immutable")

    @property
    def size(self):
        return self.points.shape[0]

    def nearest_distance(self, target):
        """Distance from target to its nearest net point."""
        if self.kind == "pure-states":
            ket = target.ket if isinstance(target, PureState) else np.asarray(target)
            ov = np.abs(self.points @ ket.conj())
            return float(np.sqrt(max(0.0, 2.0 - 2.0 * float(np.max(ov)))))
        t = mat_of(target)
        return float(np.min(_opnorm_batch(self.points - t[None, :, :])))

    def max_covering_distance(self, rng, n_targets=1000):
        """Probabilistic covering audit: worst nearest-distance over
        random targets.  At or below epsilon when the net covers."""
        rng = ensure_rng(rng)
        worst = 0.0
        for _ in range(n_targets):
            if self.kind == "pure-states":
                v = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
                target = v / np.linalg.norm(v)
            else:
                g = rng.normal(size=(self.dim, self.dim)) \
                    + 1j * rng.normal(size=(self.dim, self.dim))
                q, _ = np.linalg.qr(g)
                target = (q * rng.uniform(size=self.dim)[None, :]) @ q.conj().T
            worst = max(worst, self.nearest_distance(target))
        return worst


def _pure_net_points(dim, eps):
    if dim == 1:
        return np.array([[1.0 + 0.0j]])
    h_phi = eps / math.sqrt(dim - 1)
    n_phi = math.ceil((math.pi / 2.0) / h_phi) + 1
    n_th = math.ceil(2.0 * math.pi / eps)
    raw = n_phi ** (dim - 1) * n_th ** (dim - 1)
    if raw > NET_ENUM_CAP:
        raise CapacityError(f"pure-state lattice needs {raw} raw points")
    phis = np.linspace(0.0, math.pi / 2.0, n_phi)
    ths = np.arange(n_th) * (2.0 * math.pi / n_th)
    grids = np.meshgrid(*([phis] * (dim - 1) + [ths] * (dim - 1)), indexing="ij")
    cols = [g.reshape(-1) for g in grids]
    vecs = np.empty((cols[0].size, dim), dtype=np.complex128)
    run = np.ones(cols[0].size)
    for i in range(dim - 1):
        vecs[:, i] = run * np.cos(cols[i])
        run = run * np.sin(cols[i])
    vecs[:, dim - 1] = run
    for i in range(1, dim):
        vecs[:, i] = vecs[:, i] * np.exp(1j * cols[dim - 2 + i])
    # dedupe on rounded keys but keep the unrounded (exactly unit) vectors
    _, idx = np.unique(np.round(vecs, 9), axis=0, return_index=True)
    return vecs[np.sort(idx)]


def _bpovm_net_points(dim, eps):
    h = eps / (math.sqrt(2.0) * dim)
    n_ax = math.ceil(1.0 / h) + 1
    n_entries = dim * dim
    raw = n_ax ** n_entries
    if raw > NET_ENUM_CAP:
        raise CapacityError(f"effect lattice needs {raw} raw points")
    diag_vals = np.linspace(0.0, 1.0, n_ax)
    off_vals = np.linspace(-0.5, 0.5, n_ax)
    axes = [diag_vals] * dim + [off_vals] * (dim * (dim - 1))
    grids = np.meshgrid(*axes, indexing="ij")
    cols = [g.reshape(-1) for g in grids]
    mats = np.zeros((cols[0].size, dim, dim), dtype=np.complex128)
    for n in range(dim):
        mats[:, n, n] = cols[n]
    k = dim
    for (n, m) in _pairs(dim):
        mats[:, n, m] = cols[k] + 1j * cols[k + 1]
        mats[:, m, n] = cols[k] - 1j * cols[k + 1]
        k += 2
    # keep lattice points near a valid effect, then clamp them onto [0, I];
    # clamping at most doubles the distance, which the spacing h absorbs
    slack = dim * h / math.sqrt(2.0) + 1e-12
    w, v = eigh_batch(mats)
    keep = (w[:, 0] >= -slack) & (w[:, -1] <= 1.0 + slack)
    w = np.clip(w[keep], 0.0, 1.0)
    out = recombine(w, v[keep])
    if out.shape[0] > NET_STORED_CAP:
        raise CapacityError(f"effect net would store {out.shape[0]} points")
    return out


def build_net(kind, dim, eps):
    """Deterministic lattice-on-sphere covering net; raises CapacityError
    whenever the explicit construction would blow the desk-scale guards
    (dim <= 3, eps >= 0.05, bounded point counts)."""
    if kind not in ("pure-states", "bpovm"):
        raise ValueError(f"unknown net kind {kind!r}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if eps > NET_MAX_EPS:
        raise ValueError("net epsilon above 1/2 is degenerate")
    if dim > NET_MAX_DIM:
        raise CapacityError(f"explicit nets stop at dim {NET_MAX_DIM}")
    if eps < NET_MIN_EPS:
        raise CapacityError(f"explicit nets stop at eps {NET_MIN_EPS}")
    if kind == "pure-states":
        pts = _pure_net_points(dim, eps)
    else:
        pts = _bpovm_net_points(dim, eps)
    if pts.shape[0] > NET_STORED_CAP:
        raise CapacityError(f"net would store {pts.shape[0]} points")
    return EpsilonNet(kind, dim, eps, pts)


# ---------------------------------------------------------------------------
# Derandomization by sampling
# ---------------------------------------------------------------------------

def derand_sample_count(dx, dy_dim, eps):
    """t = ceil((8/eps^2)(ln dx + dy^2 ln(4/eps))): large enough that the
    union-bound event over inputs and the eps/2 effect net holds with
    probability near one per attempt."""
    return int(math.ceil((CHERNOFF_CONST / eps ** 2)
                         * (math.log(dx) + dy_dim ** 2 * math.log(4.0 / eps))))


def derandomize(family_dist, dx, dy_dim, eps, seed=0, t=None):
    """Replace a weighted circuit family by a uniform multiset of t
    members that no input/effect pair can tell apart beyond eps.

    family_dist: list of (weight, table) pairs, each table a stack
    (dx, dy, dy) mapping classical input -> output state.  Samples t
    members i.i.d. and re-samples (up to 64 attempts) until the
    empirical mixture is within eps/2 of the truth for every input and
    every effect in the eps/2 net, which extends to all effects at eps.
    Returns the sampled tables in draw order.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    weights = np.array([float(w) for w, _ in family_dist])
    if weights.size == 0:
        raise ValueError("empty family")
    if np.any(weights < -1e-12) or abs(float(weights.sum()) - 1.0) > 1e-9:
        raise ValueError("weights must be a probability vector")
    weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum()
    tables = np.stack([np.asarray(c, dtype=np.complex128) for _, c in family_dist])
    if tables.shape[1:] != (dx, dy_dim, dy_dim):
        raise ValueError(f"tables must be ({dx}, {dy_dim}, {dy_dim}) stacks")
    if t is None:
        t = derand_sample_count(dx, dy_dim, eps)
    net = build_net("bpovm", dy_dim, eps / 2.0)
    true_mix = np.einsum("i,ixab->xab", weights, tables)
    true_vals = np.real(np.einsum("nab,xba->xn", net.points, true_mix))
    rng = ensure_rng(seed, "derandomize")
    for _ in range(DERAND_MAX_RETRIES):
        idx = rng.choice(weights.size, size=t, p=weights)
        counts = np.bincount(idx, minlength=weights.size)
        emp_mix = np.einsum("i,ixab->xab", counts / t, tables)
        emp_vals = np.real(np.einsum("nab,xba->xn", net.points, emp_mix))
        if float(np.max(np.abs(true_vals - emp_vals))) <= eps / 2.0:
            return [tables[i] for i in idx]
    raise solvers.SolverError(
        "derandomization retries exhausted; eps too small for t",
        residuals={"last_gap": float(np.max(np.abs(true_vals - emp_vals)))})
