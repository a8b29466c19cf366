"""Certificates of computational entropy against finite families of
binary distinguishers.

Three kinds of question are answered here, always relative to an
explicit family of accept effects rather than an abstract adversary.
The relative checks ask whether one state can stand in for another: a
dominance witness is a state below a scaled copy of the reference that
the family cannot tell from the target (check_hill1 and check_hill2,
which differ in which argument moves), with one-shot per-member
variants (check_metric1, check_metric2) and the plain acceptance-ratio
bound (check_pseudo_relative).  The conditional certificates bound the
min-entropy a source keeps "up to the family": some state with genuine
min-entropy at least k must reproduce every member's acceptance within
eps (h_hill_cond), or one such state per member (h_metric_cond), or no
supplied guessing strategy may beat 2^-k + eps (h_guess).

Feasibility searches run Dykstra's alternating projections over
spectral caps and per-member slabs.  Refusals are only issued from
exact or provably outer per-member intervals, and a search that stalls
does not guess: the witness checks raise, and the conditional
certificates return the verdict "undetermined", which is distinct from
"false" by design.

metric_to_hill_experiment chains the two conditional notions through
the min-max game: when the witness search fails at the degraded budget
eps + delta, the game against the family closed under complements must
produce one mixed distinguisher that beats every state at the entropy
floor by more than delta, and the report records which of the two
outcomes fired.  reverse_dmt transports a convex split of one state to
a new numerator, completing the toolbox.
"""

import json
import math

import numpy as np

from . import mmwu, solvers
from .leaksim import DistinguisherFamilyCq
from .opalg import herm_eig, mat_of, max_abs_entry, trace_inner, trace_norm
from .qstate import (Bpovm, CqState, DensityOperator, StateError, h_min_cond,
                     is_delta_dense)
from .tomog import CapacityError

FEAS_TOL = 1e-8        # Dykstra violation target for witness searches
WITNESS_ATOL = 1e-6    # certificate invariant: witness feasibility slack
POVM_ATOL = 1e-8       # guessing strategies must resolve the identity
SCAN_SLACK = 1e-9      # slack around exact per-member intervals
SEARCH_SWEEPS = 5000   # Dykstra budget per feasibility search
EMPTY_TOL = 1e-12      # trace shortfall that empties a dominated set

NOTIONS = frozenset({
    "HILL", "rHILL", "metric", "metric-rlx", "guess",
    "D-HILL1", "D-HILL2", "D-metric1", "D-metric2", "D-pseudo",
})
DIRECTIONS = ("at-least", "at-most")
VERDICTS = ("true", "false", "undetermined")

__all__ = [
    "DistinguisherFamily", "EntropyCertificate", "check_hill1",
    "check_hill2", "check_metric1", "check_metric2",
    "check_pseudo_relative", "h_guess", "h_hill_cond", "h_metric_cond",
    "metric_to_hill_experiment", "reverse_dmt",
]


def _sym(m):
    return 0.5 * (m + m.conj().T)


def _as_density(x):
    return x if isinstance(x, DensityOperator) else DensityOperator(x)


# ---------------------------------------------------------------------------
# Families and certificates
# ---------------------------------------------------------------------------

class DistinguisherFamily:
    """Finite indexed list of binary accept effects over one system.

    The empty family is legal; every per-member check is then vacuous.
    """

    __slots__ = ("effects", "labels", "dim")

    def __init__(self, effects, labels=None):
        effects = tuple(e if isinstance(e, Bpovm) else Bpovm(e)
                        for e in effects)
        dims = {e.dim for e in effects}
        if len(dims) > 1:
            raise ValueError(f"effects mix dimensions {sorted(dims)}")
        if labels is None:
            labels = tuple(f"D{i}" for i in range(len(effects)))
        else:
            labels = tuple(str(lab) for lab in labels)
            if len(labels) != len(effects):
                raise ValueError("labels and effects differ in length")
            if len(set(labels)) != len(labels):
                raise ValueError("member labels must be unique")
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dim", dims.pop() if dims else None)

    def __setattr__(self, name, value):
        raise AttributeError("DistinguisherFamily is immutable")

    def __len__(self):
        return len(self.effects)

    def expectations(self, mat):
        """<Pi_m, W> for every member, as a float vector."""
        if not self.effects:
            return np.zeros(0)
        stack = np.stack([e.mat for e in self.effects])
        return np.real(np.einsum("mij,ij->m", np.conj(stack), mat))

    def with_complements(self):
        """Family extended by I - Pi for every member, labeled '<l>^c'."""
        effs = list(self.effects) + [e.complement() for e in self.effects]
        labs = list(self.labels) + [f"{lab}^c" for lab in self.labels]
        return DistinguisherFamily(effs, labs)

    def __repr__(self):
        return f"DistinguisherFamily(members={len(self)}, dim={self.dim})"


def _as_family(family, dim=None):
    if isinstance(family, DistinguisherFamilyCq):
        raise StateError("per-symbol family: this check measures one system")
    fam = family if isinstance(family, DistinguisherFamily) \
        else DistinguisherFamily(tuple(family))
    if dim is not None and fam.dim is not None and fam.dim != dim:
        raise StateError(f"family dimension {fam.dim} != state dimension {dim}")
    return fam


def _encode_mat(m):
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


def _decode_mat(d):
    return np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"],
                                                              dtype=float)


def _plain(x):
    return x.item() if hasattr(x, "item") else x


def _encode_witness(w):
    if w is None:
        return None
    if isinstance(w, CqState):
        return {"kind": "cq",
                "support": [_plain(x) for x in w.support],
                "probs": [float(p) for p in w.probs],
                "states": [_encode_mat(s.mat) for s in w.states]}
    return {"kind": "density", "mat": _encode_mat(w.mat)}


def _decode_witness(d):
    if d is None:
        return None
    if d["kind"] == "cq":
        return CqState(tuple(d["support"]),
                       np.asarray(d["probs"], dtype=float),
                       [DensityOperator(_decode_mat(s)) for s in d["states"]])
    return DensityOperator(_decode_mat(d["mat"]))


class EntropyCertificate:
    """Outcome of one entropy check: which notion, at what bound, with
    which verdict, and the witness state when feasibility was shown.

    The verdict is three-valued.  "true" is only issued with a witness
    verified to satisfy the notion within 1e-6, "false" only from an
    exact or outer per-member refusal, and a stalled search reports
    "undetermined" rather than either.
    """

    __slots__ = ("notion", "bound", "direction", "verdict", "witness",
                 "family_label", "eps")

    def __init__(self, notion, bound, direction, verdict, witness=None,
                 family_label=None, eps=None):
        if notion not in NOTIONS:
            raise ValueError(f"unknown notion {notion!r}")
        if direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if witness is not None and not isinstance(witness,
                                                  (DensityOperator, CqState)):
            raise ValueError("witness must be a density operator or cq state")
        object.__setattr__(self, "notion", notion)
        object.__setattr__(self, "bound", float(bound))
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "verdict", verdict)
        object.__setattr__(self, "witness", witness)
        object.__setattr__(self, "family_label",
                           None if family_label is None else str(family_label))
        object.__setattr__(self, "eps", None if eps is None else float(eps))

    def __setattr__(self, name, value):
        raise AttributeError("EntropyCertificate is immutable")

    def as_dict(self):
        return {"notion": self.notion, "bound": self.bound,
                "direction": self.direction, "verdict": self.verdict,
                "family_label": self.family_label, "eps": self.eps,
                "witness": _encode_witness(self.witness)}

    def to_json(self):
        return json.dumps(self.as_dict())

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["notion"], d["bound"], d["direction"], d["verdict"],
                   witness=_decode_witness(d["witness"]),
                   family_label=d["family_label"], eps=d["eps"])

    def __repr__(self):
        return (f"EntropyCertificate(notion={self.notion!r}, "
                f"bound={self.bound:g}, verdict={self.verdict!r})")


# ---------------------------------------------------------------------------
# Relative checks
# ---------------------------------------------------------------------------

def _relative_args(rho, sigma, lam, family):
    r = _as_density(rho).mat
    s = _as_density(sigma).mat
    if r.shape != s.shape:
        raise StateError("state dimensions differ")
    lam = float(lam)
    try:
        scale = 2.0 ** lam
    except OverflowError:
        scale = math.inf
    if not math.isfinite(scale):
        raise ValueError("scaling exponent too large")
    return r, s, lam, _as_family(family, r.shape[0])


def check_pseudo_relative(rho, sigma, lam, family, eps):
    """True when every member accepts rho at most 2^lam times as often
    as sigma, plus eps."""
    r, s, lam, fam = _relative_args(rho, sigma, lam, family)
    eps = float(eps)
    scale = 2.0 ** lam
    for eff in fam.effects:
        if trace_inner(eff.mat, r) > scale * trace_inner(eff.mat, s) \
                + eps + SCAN_SLACK:
            return False
    return True


def _dominated_interval(pi, cap):
    """Exact range of <Pi, W> over {0 <= W <= cap, tr W = 1}."""
    _, lo = solvers.linear_min_capped(pi, cap)
    _, neg = solvers.linear_min_capped(-pi, cap)
    return lo, -neg


def check_metric1(rho, sigma, lam, family, eps):
    """Member-by-member stand-in on the first argument: for each member
    some state dominated by 2^lam sigma must accept at least as often as
    rho less eps.  One capped linear program per member; the empty
    family is vacuously true."""
    r, s, lam, fam = _relative_args(rho, sigma, lam, family)
    eps = float(eps)
    if not len(fam):
        return True
    if 2.0 ** lam < 1.0 - EMPTY_TOL:
        return False       # no unit-trace state fits under the cap
    cap = _sym((2.0 ** lam) * s)
    for eff in fam.effects:
        _, neg = solvers.linear_min_capped(-eff.mat, cap)
        if trace_inner(eff.mat, r) - (-neg) > eps + SCAN_SLACK:
            return False
    return True


def check_metric2(rho, sigma, lam, family, eps):
    """Mirror of check_metric1 on the second argument: sigma must look,
    member by member, like some state dominating 2^-lam rho.  Writing
    that state as 2^-lam rho + (1 - 2^-lam) omega makes the best
    acceptance a closed form in the member's extreme eigenvalues."""
    r, s, lam, fam = _relative_args(rho, sigma, lam, family)
    eps = float(eps)
    if not len(fam):
        return True
    if lam < 0.0:
        return False       # the dominating state would need trace above one
    t = 2.0 ** -lam
    for eff in fam.effects:
        top = float(herm_eig(eff.mat).eigenvalues[0])
        hi = t * trace_inner(eff.mat, r) + (1.0 - t) * top
        if trace_inner(eff.mat, s) - hi > eps + SCAN_SLACK:
            return False
    return True


def _psd_excess(m):
    return max(0.0, -float(herm_eig(m).eigenvalues[-1]))


def _slab_excess(fam, targets, mat):
    if not len(fam):
        return 0.0
    vals = fam.expectations(mat)
    return float(np.max(np.abs(vals - targets)))


def _tidy_density(z):
    w = solvers.clip_psd(z)
    tr = float(np.real(np.trace(w)))
    if tr <= 0.0:
        raise solvers.SolverError("witness collapsed to zero trace")
    return DensityOperator(w / tr)


def check_hill1(rho, sigma, lam, family, eps):
    """Search for one state dominated by 2^lam sigma whose acceptance
    matches rho's within eps on every member (two sided).  Returns
    (ok, witness).

    Refusals are certified against the exact achievable interval of each
    member; a joint search that stalls raises SolverError rather than
    returning a guess.
    """
    r, s, lam, fam = _relative_args(rho, sigma, lam, family)
    eps = float(eps)
    if 2.0 ** lam < 1.0 - EMPTY_TOL:
        return False, None
    cap = _sym((2.0 ** lam) * s)
    targets = fam.expectations(r)

    for i, eff in enumerate(fam.effects):
        lo, hi = _dominated_interval(eff.mat, cap)
        if targets[i] < lo - eps - SCAN_SLACK \
                or targets[i] > hi + eps + SCAN_SLACK:
            return False, None

    # cheap witnesses first: rho itself, then sigma (always under the cap)
    for cand in (r, s):
        if _psd_excess(cap - cand) <= FEAS_TOL \
                and _slab_excess(fam, targets, cand) <= eps + SCAN_SLACK:
            return True, DensityOperator(cand)

    projections = [
        solvers.clip_psd,
        lambda m: solvers.project_trace(m, 1.0),
        lambda m: solvers.cap_dominated(m, cap),
    ]
    for eff, v in zip(fam.effects, targets):
        projections.append(
            lambda m, a=eff.mat, lo=v - eps, hi=v + eps:
            solvers.project_slab(m, a, lo, hi))

    def violation(z):
        out = _psd_excess(z)
        out = max(out, abs(float(np.real(np.trace(z))) - 1.0))
        out = max(out, _psd_excess(cap - z))
        if len(fam):
            out = max(out, _slab_excess(fam, targets, z) - eps)
        return out

    z, info = solvers.dykstra(r.astype(complex), projections, violation,
                              FEAS_TOL, max_iter=SEARCH_SWEEPS)
    if info["feasible"]:
        w = _tidy_density(z)
        if _psd_excess(cap - w.mat) <= WITNESS_ATOL \
                and _slab_excess(fam, targets, w.mat) <= eps + WITNESS_ATOL:
            return True, w
    raise solvers.SolverError(
        "dominance-witness search is undetermined: alternating projection "
        f"stalled at violation {info['violation']:.3e}", residuals=info)


def check_hill2(rho, sigma, lam, family, eps):
    """Mirror search: some state dominating 2^-lam rho that the family
    cannot tell from sigma.  Writing it as 2^-lam rho + (1 - 2^-lam)
    omega over densities omega removes the domination constraint and
    leaves slabs on omega.  Returns (ok, witness)."""
    r, s, lam, fam = _relative_args(rho, sigma, lam, family)
    eps = float(eps)
    if lam < 0.0:
        return False, None
    t = 2.0 ** -lam
    targets = fam.expectations(s)

    if t >= 1.0 - EMPTY_TOL:
        # lam == 0 forces the witness to be rho itself
        if _slab_excess(fam, targets, r) <= eps + SCAN_SLACK:
            return True, DensityOperator(r)
        return False, None

    base = t * fam.expectations(r)
    for i, eff in enumerate(fam.effects):
        dec = herm_eig(eff.mat)
        lo = base[i] + (1.0 - t) * float(dec.eigenvalues[-1])
        hi = base[i] + (1.0 - t) * float(dec.eigenvalues[0])
        if targets[i] < lo - eps - SCAN_SLACK \
                or targets[i] > hi + eps + SCAN_SLACK:
            return False, None

    d = r.shape[0]
    snap = solvers.clip_psd(s - t * r)
    snap_tr = float(np.real(np.trace(snap)))
    cands = [s, np.eye(d) / d, r]
    if snap_tr > EMPTY_TOL:
        cands.append(snap / snap_tr)
    for omega in cands:
        w = t * r + (1.0 - t) * omega
        if _slab_excess(fam, targets, w) <= eps + SCAN_SLACK:
            return True, DensityOperator(w)

    # omega-space slabs
    olo = (targets - eps - base) / (1.0 - t)
    ohi = (targets + eps - base) / (1.0 - t)
    projections = [solvers.clip_psd, lambda m: solvers.project_trace(m, 1.0)]
    for i, eff in enumerate(fam.effects):
        projections.append(
            lambda m, a=eff.mat, lo=float(olo[i]), hi=float(ohi[i]):
            solvers.project_slab(m, a, lo, hi))

    def violation(z):
        out = _psd_excess(z)
        out = max(out, abs(float(np.real(np.trace(z))) - 1.0))
        if len(fam):
            vals = fam.expectations(z)
            out = max(out, float(np.max(np.maximum(olo - vals, 0.0))))
            out = max(out, float(np.max(np.maximum(vals - ohi, 0.0))))
        return out

    z, info = solvers.dykstra(np.asarray(s, dtype=complex), projections,
                              violation, FEAS_TOL, max_iter=SEARCH_SWEEPS)
    if info["feasible"]:
        omega = _tidy_density(z)
        w = DensityOperator(t * r + (1.0 - t) * omega.mat)
        if _slab_excess(fam, targets, w.mat) <= eps + WITNESS_ATOL:
            return True, w
    raise solvers.SolverError(
        "dominating-witness search is undetermined: alternating projection "
        f"stalled at violation {info['violation']:.3e}", residuals=info)


# ---------------------------------------------------------------------------
# Conditional certificates, trivial leak register
# ---------------------------------------------------------------------------

def _greedy_fill(eigs, cap):
    """Max of sum theta_i * e_i with 0 <= theta <= cap, sum theta = 1,
    for eigenvalues listed in the order they should be consumed."""
    left, out = 1.0, 0.0
    for e in eigs:
        take = min(cap, left)
        out += take * float(e)
        left -= take
        if left <= 1e-17:
            break
    return out


def _unicap_interval(pi, c):
    """Exact range of <Pi, W> over {0 <= W <= c I, tr W = 1}."""
    eigs = herm_eig(pi).eigenvalues          # descending
    return _greedy_fill(eigs[::-1], c), _greedy_fill(eigs, c)


def _flat_search(r, fam, k, eps):
    """Shared engine behind the conditional certificates when the leak
    register is trivial: decide whether some state with top eigenvalue
    at most 2^-k reproduces every listed member within eps.

    Returns (verdict, witness, label) where label names the refusing
    member when the verdict is "false" on a member scan.
    """
    d = r.shape[0]
    c = 2.0 ** -float(k)
    if c * d < 1.0 - EMPTY_TOL:
        return "false", None, None       # no state attains the floor
    targets = fam.expectations(r)

    for i, eff in enumerate(fam.effects):
        lo, hi = _unicap_interval(eff.mat, c)
        if targets[i] < lo - eps - SCAN_SLACK \
                or targets[i] > hi + eps + SCAN_SLACK:
            return "false", None, fam.labels[i]

    cands = [np.eye(d) / d]
    if float(herm_eig(r).eigenvalues[0]) <= c + FEAS_TOL:
        cands.insert(0, r)
    for cand in cands:
        if _slab_excess(fam, targets, cand) <= eps + SCAN_SLACK:
            return "true", DensityOperator(cand), None

    projections = [
        lambda m: solvers.clip_interval(m, 0.0, c),
        lambda m: solvers.project_trace(m, 1.0),
    ]
    for eff, v in zip(fam.effects, targets):
        projections.append(
            lambda m, a=eff.mat, lo=v - eps, hi=v + eps:
            solvers.project_slab(m, a, lo, hi))

    def violation(z):
        dec = herm_eig(z)
        out = max(0.0, -float(dec.eigenvalues[-1]))
        out = max(out, float(dec.eigenvalues[0]) - c)
        out = max(out, abs(float(np.real(np.trace(z))) - 1.0))
        if len(fam):
            out = max(out, _slab_excess(fam, targets, z) - eps)
        return out

    z, info = solvers.dykstra(r.astype(complex), projections, violation,
                              FEAS_TOL, max_iter=SEARCH_SWEEPS)
    if not info["feasible"]:
        return "undetermined", None, None
    w = _tidy_density(z)
    if float(herm_eig(w.mat).eigenvalues[0]) <= c + WITNESS_ATOL \
            and _slab_excess(fam, targets, w.mat) <= eps + WITNESS_ATOL:
        return "true", w, None
    return "undetermined", None, None


def _flatten_cq(rho, family):
    """A cq state with a one-dimensional leak register is a classical
    distribution; fold it and its per-symbol family onto the diagonal."""
    r = rho.joint().mat
    if not isinstance(family, DistinguisherFamilyCq):
        members = list(family)
        if not members:
            return r, DistinguisherFamily(())
        family = DistinguisherFamilyCq(members)
    stack = family.effect_stack(rho.support)         # (M, S, 1, 1)
    effs = [np.diag(np.real(stack[i, :, 0, 0])) for i in range(len(stack))]
    return r, DistinguisherFamily(effs, family.labels)


def _diag_to_cq(w, support):
    probs = np.maximum(np.real(np.diag(w.mat)), 0.0)
    probs = probs / probs.sum()
    one = DensityOperator(np.eye(1))
    return CqState(support, probs, [one] * len(support))


# ---------------------------------------------------------------------------
# Conditional certificates, nontrivial leak register
# ---------------------------------------------------------------------------

def _simplex_shift(w, cap):
    """Smallest mu >= 0 with sum max(w - mu, 0) <= cap (w descending)."""
    if float(np.maximum(w, 0.0).sum()) <= cap:
        return 0.0
    css = np.cumsum(w)
    for j in range(1, w.size + 1):
        mu = (float(css[j - 1]) - cap) / j
        below = w[j] if j < w.size else -np.inf
        if w[j - 1] >= mu >= below:
            return max(0.0, mu)
    return max(0.0, (float(css[-1]) - cap) / w.size)


def _project_trace_ball(m, cap):
    """Projection onto {M >= 0, tr M <= cap}."""
    dec = herm_eig(m)
    mu = _simplex_shift(dec.eigenvalues, cap)
    return dec.apply(lambda e: max(e - mu, 0.0))


class _CqSearch:
    """Feasibility machinery for conditional certificates of a cq source
    with a nontrivial leak register.

    The variable is the stack (A_1 .. A_S, tau): blocks of the candidate
    joint state plus its dominating operator, so the floor constraint
    "guessing probability at most 2^-k" becomes A_x <= tau with
    tr tau <= 2^-k, all of it projectable in closed form.
    """

    def __init__(self, rho, k, fam, eps, relaxed):
        self.rho = rho
        self.S = rho.nsymbols
        self.db = rho.dim_b
        self.k = float(k)
        self.c = 2.0 ** -self.k
        self.eps = float(eps)
        self.relaxed = bool(relaxed)
        self.stack = fam.effect_stack(rho.support)       # (M, S, db, db)
        self.labels = fam.labels
        self.blocks = rho.blocks()                       # (S, db, db)
        self.rb = rho.marginal_b().mat
        self.targets = np.real(
            np.einsum("msij,sij->m", np.conj(self.stack), self.blocks))
        self.empty = self.S * self.c < 1.0 - EMPTY_TOL

    # -- outer bounds -------------------------------------------------------

    def _outer_max(self, tables):
        """Sound upper bound on sum_x <T_x, A_x> over the floor set."""
        tot = _sym(tables.sum(axis=0))
        bound_tau = self.c * float(herm_eig(tot).eigenvalues[0])
        pooled = np.sort(np.concatenate(
            [herm_eig(t).eigenvalues for t in tables]))[::-1]
        bound_fill = _greedy_fill(pooled, self.c)
        return min(1.0, bound_tau, bound_fill)

    def outer_interval(self, i):
        hi = self._outer_max(self.stack[i])
        comp = np.eye(self.db)[None] - self.stack[i]
        lo = 1.0 - self._outer_max(comp)
        return max(0.0, lo), hi

    # -- projections --------------------------------------------------------

    def _p_spectral(self, z):
        out = z.copy()
        out[:self.S] = solvers.clip_psd(z[:self.S])
        out[self.S] = _project_trace_ball(z[self.S], self.c)
        return out

    def _p_total_trace(self, z):
        out = z.copy()
        tr = float(np.real(np.einsum("sii->", z[:self.S])))
        out[:self.S] += (1.0 - tr) / (self.S * self.db) * np.eye(self.db)
        return out

    def _p_pair(self, z, x):
        out = z.copy()
        diff = z[self.S] - z[x]
        neg = diff - solvers.clip_psd(diff)      # the part violating <=
        out[x] = z[x] + 0.5 * neg
        out[self.S] = z[self.S] - 0.5 * neg
        return out

    def _p_marginal(self, z):
        out = z.copy()
        gap = (z[:self.S].sum(axis=0) - self.rb) / self.S
        out[:self.S] -= gap[None]
        return out

    def _padded(self, i):
        a = np.zeros((self.S + 1, self.db, self.db), dtype=complex)
        a[:self.S] = self.stack[i]
        return a

    def member_values(self, blocks):
        return np.real(np.einsum("msij,sij->m", np.conj(self.stack), blocks))

    # -- search -------------------------------------------------------------

    def solve(self, indices):
        """Feasibility with the given member slabs active; returns
        ("feasible", witness) or ("stall", None)."""
        S, db = self.S, self.db
        z0 = np.zeros((S + 1, db, db), dtype=complex)
        z0[:S] = self.blocks
        z0[S] = self.c * self.rb

        projections = [self._p_spectral, self._p_total_trace]
        for x in range(S):
            projections.append(lambda z, x=x: self._p_pair(z, x))
        if not self.relaxed:
            projections.append(self._p_marginal)
        for i in indices:
            projections.append(
                lambda z, a=self._padded(i), lo=self.targets[i] - self.eps,
                hi=self.targets[i] + self.eps:
                solvers.project_slab(z, a, lo, hi))

        def violation(z):
            out = _psd_excess(z[S])
            out = max(out, max(0.0, float(np.real(np.trace(z[S]))) - self.c))
            out = max(out, abs(float(np.real(np.einsum("sii->", z[:S]))) - 1.0))
            for x in range(S):
                out = max(out, _psd_excess(z[x]))
                out = max(out, _psd_excess(z[S] - z[x]))
            if not self.relaxed:
                out = max(out,
                          max_abs_entry(z[:S].sum(axis=0) - self.rb))
            vals = self.member_values(z[:S])
            for i in indices:
                out = max(out, abs(vals[i] - self.targets[i]) - self.eps)
            return out

        z, info = solvers.dykstra(z0, projections, violation, FEAS_TOL,
                                  max_iter=SEARCH_SWEEPS)
        if not info["feasible"]:
            return "stall", None
        return "feasible", self._to_cq(z)

    def _to_cq(self, z):
        a = solvers.clip_psd(z[:self.S])
        q = np.maximum(np.real(np.einsum("sii->s", a)), 0.0)
        states = []
        for x in range(self.S):
            if q[x] > 1e-12:
                states.append(DensityOperator(a[x] / q[x]))
            else:
                states.append(DensityOperator(np.eye(self.db) / self.db))
        return CqState(self.rho.support, q / q.sum(), states)

    def verify(self, witness, indices):
        """Certificate invariant: floor, slabs, and marginal within
        WITNESS_ATOL of their targets."""
        if h_min_cond(witness) < self.k - WITNESS_ATOL:
            return False
        vals = self.member_values(witness.blocks())
        for i in indices:
            if abs(vals[i] - self.targets[i]) > self.eps + WITNESS_ATOL:
                return False
        if not self.relaxed:
            if trace_norm(witness.marginal_b().mat - self.rb) > WITNESS_ATOL:
                return False
        return True

    def uniform_candidate(self):
        return _uniform_cq_candidate(self.rho)


def _uniform_cq_candidate(rho):
    """Uniform classical value attached to the true leak marginal:
    min-entropy exactly log2(nsymbols), marginal equality for free."""
    probs = np.full(rho.nsymbols, 1.0 / rho.nsymbols)
    rb = rho.marginal_b()
    return CqState(rho.support, probs, [rb] * rho.nsymbols)


def _cq_certificate(rho, k, family, eps, relaxed, per_member):
    """Conditional certificate engine for a nontrivial leak register.

    per_member False runs one joint search (all slabs at once); True
    allows a different stand-in state per member and returns no witness.
    """
    notion = ("metric-rlx" if relaxed else "metric") if per_member \
        else ("rHILL" if relaxed else "HILL")
    k = float(k)
    eps = float(eps)

    members = list(family.members) if isinstance(family,
                                                 DistinguisherFamilyCq) \
        else list(family)
    if not members:
        c = 2.0 ** -k
        if rho.nsymbols * c < 1.0 - EMPTY_TOL:
            return EntropyCertificate(notion, k, "at-least", "false", eps=eps)
        if per_member:
            return EntropyCertificate(notion, k, "at-least", "true", eps=eps)
        return EntropyCertificate(notion, k, "at-least", "true",
                                  witness=_uniform_cq_candidate(rho), eps=eps)

    fam = family if isinstance(family, DistinguisherFamilyCq) \
        else DistinguisherFamilyCq(members)
    search = _CqSearch(rho, k, fam, eps, relaxed)
    if search.empty:
        return EntropyCertificate(notion, k, "at-least", "false", eps=eps)

    nmem = len(search.targets)
    for i in range(nmem):
        lo, hi = search.outer_interval(i)
        if search.targets[i] < lo - eps - SCAN_SLACK \
                or search.targets[i] > hi + eps + SCAN_SLACK:
            return EntropyCertificate(notion, k, "at-least", "false",
                                      family_label=search.labels[i], eps=eps)

    all_idx = list(range(nmem))
    cands = [search.uniform_candidate()]
    if h_min_cond(rho) >= k - 1e-12:
        cands.insert(0, rho)
    for cand in cands:
        vals = search.member_values(cand.blocks())
        if float(np.max(np.abs(vals - search.targets))) <= eps + SCAN_SLACK:
            if per_member:
                return EntropyCertificate(notion, k, "at-least", "true",
                                          eps=eps)
            return EntropyCertificate(notion, k, "at-least", "true",
                                      witness=cand, eps=eps)

    if per_member:
        for i in range(nmem):
            status, witness = search.solve([i])
            if status != "feasible" or not search.verify(witness, [i]):
                return EntropyCertificate(notion, k, "at-least",
                                          "undetermined",
                                          family_label=search.labels[i],
                                          eps=eps)
        return EntropyCertificate(notion, k, "at-least", "true", eps=eps)

    status, witness = search.solve(all_idx)
    if status == "feasible" and search.verify(witness, all_idx):
        return EntropyCertificate(notion, k, "at-least", "true",
                                  witness=witness, eps=eps)
    return EntropyCertificate(notion, k, "at-least", "undetermined", eps=eps)


# ---------------------------------------------------------------------------
# Conditional certificates, public entry points
# ---------------------------------------------------------------------------

def h_metric_cond(rho, k, family, eps, relaxed=False):
    """Certificate that rho keeps min-entropy at least k up to the
    family, member by member: for each member some state with genuine
    min-entropy >= k (and the same leak marginal unless relaxed)
    reproduces its acceptance within eps, two sided.

    Accepts a density operator (trivial leak register, family of plain
    effects) or a CqState (per-symbol family).  The verdict is exact in
    the trivial case; with a leak register, refusals come from provably
    outer intervals and a stalled member search reports "undetermined".
    """
    notion = "metric-rlx" if relaxed else "metric"
    eps = float(eps)
    k = float(k)
    if isinstance(rho, CqState):
        if rho.dim_b > 1:
            return _cq_certificate(rho, k, family, eps, relaxed,
                                   per_member=True)
        r, fam = _flatten_cq(rho, family)
    else:
        r = _as_density(rho).mat
        fam = _as_family(family, r.shape[0])

    c = 2.0 ** -k
    if c * r.shape[0] < 1.0 - EMPTY_TOL:
        return EntropyCertificate(notion, k, "at-least", "false", eps=eps)
    targets = fam.expectations(r)
    for i, eff in enumerate(fam.effects):
        lo, hi = _unicap_interval(eff.mat, c)
        if targets[i] < lo - eps - SCAN_SLACK \
                or targets[i] > hi + eps + SCAN_SLACK:
            return EntropyCertificate(notion, k, "at-least", "false",
                                      family_label=fam.labels[i], eps=eps)
    return EntropyCertificate(notion, k, "at-least", "true", eps=eps)


def h_hill_cond(rho, k, family, eps, relaxed=False):
    """Certificate that one state with genuine min-entropy at least k
    (and the same leak marginal unless relaxed) reproduces every
    member's acceptance within eps, two sided.

    Accepts the same inputs as h_metric_cond.  A "true" verdict carries
    the witness state, verified to satisfy the floor, every slab, and
    the marginal within 1e-6; "false" comes only from per-member
    refusals; a stalled joint search reports "undetermined".
    """
    notion = "rHILL" if relaxed else "HILL"
    eps = float(eps)
    k = float(k)
    if isinstance(rho, CqState):
        if rho.dim_b > 1:
            return _cq_certificate(rho, k, family, eps, relaxed,
                                   per_member=False)
        r, fam = _flatten_cq(rho, family)
        verdict, witness, label = _flat_search(r, fam, k, eps)
        if witness is not None:
            witness = _diag_to_cq(witness, rho.support)
        return EntropyCertificate(notion, k, "at-least", verdict,
                                  witness=witness, family_label=label,
                                  eps=eps)
    r = _as_density(rho).mat
    fam = _as_family(family, r.shape[0])
    verdict, witness, label = _flat_search(r, fam, k, eps)
    return EntropyCertificate(notion, k, "at-least", verdict,
                              witness=witness, family_label=label, eps=eps)


def h_guess(rho, strategies, k, eps):
    """True when no supplied guessing strategy identifies the classical
    value with probability above 2^-k + eps.

    Each strategy is one complete measurement: a mapping (or sequence
    aligned with the support) from symbol to accept effect, and the
    effects must sum to the identity within 1e-8.
    """
    if not isinstance(rho, CqState):
        raise StateError("h_guess needs a CqState")
    k = float(k)
    eps = float(eps)
    blocks = rho.blocks()
    best = 0.0
    for table in strategies:
        effs = _strategy_effects(table, rho.support, rho.dim_b)
        total = sum(effs)
        if max_abs_entry(total - np.eye(rho.dim_b)) > POVM_ATOL:
            raise StateError("strategy effects must sum to the identity")
        val = sum(trace_inner(e, blocks[x]) for x, e in enumerate(effs))
        best = max(best, val)
    return best <= 2.0 ** -k + eps + 1e-12


def _strategy_effects(table, support, db):
    if hasattr(table, "keys"):
        try:
            entries = [table[x] for x in support]
        except KeyError as err:
            raise StateError(f"strategy misses symbol {err.args[0]!r}")
    else:
        entries = list(table)
        if len(entries) != len(support):
            raise StateError("strategy length differs from the support")
    mats = [Bpovm(e).mat for e in entries]
    if any(m.shape[0] != db for m in mats):
        raise StateError("strategy effect dimension differs from the state")
    return mats


# ---------------------------------------------------------------------------
# The game experiment
# ---------------------------------------------------------------------------

def metric_to_hill_experiment(rho, k, family, eps, delta):
    """Chain the two conditional notions through the min-max game.

    Records the member-by-member certificate at eps, then searches a
    joint witness at the degraded budget eps + delta.  When that search
    does not certify feasibility, the game over states with min-entropy
    at least k, against the family closed under complements, must
    produce one mixed distinguisher whose advantage over every such
    state exceeds delta.  The report names the branch that fired
    ("hill" or "universal"); "consistent" asserts exactly one did.
    """
    if isinstance(rho, CqState):
        raise CapacityError(
            "the game runs over a trivial leak register at this scale; "
            "flatten the classical register first (rho.joint())")
    rho = _as_density(rho)
    d = rho.dim
    k = float(k)
    eps = float(eps)
    delta = float(delta)
    if delta <= 0.0 or eps < 0.0:
        raise ValueError("eps must be nonnegative and delta positive")
    if not 0.0 <= k <= math.log2(d) + 1e-12:
        raise ValueError("entropy floor must lie in [0, log2 dim]")
    fam = _as_family(family, d)
    if not len(fam):
        raise ValueError("the game needs at least one family member")

    eps_prime = eps + delta
    metric_cert = h_metric_cond(rho, k, fam, eps)
    hill_cert = h_hill_cond(rho, k, fam, eps_prime)
    report = {
        "k": k, "eps": eps, "delta": delta, "eps_prime": eps_prime,
        "metric_verdict": metric_cert.verdict,
        "hill": hill_cert.as_dict(),
        "branch": "none", "universal": None,
    }

    if hill_cert.verdict == "true":
        report["branch"] = "hill"
    else:
        aug = fam.with_complements()
        rmat = rho.mat
        evals = aug.expectations(rmat)
        eye = np.eye(d)
        payoffs = [_sym(((evals[i] + 1.0) * eye - aug.effects[i].mat) / 2.0)
                   for i in range(len(aug))]
        scores_of = aug.expectations

        def best_response(a):
            amat = a.mat
            scores = evals - scores_of(amat)
            i = int(np.argmax(scores))
            return aug.labels[i], payoffs[i]

        oracle = mmwu.GameOracle(best_response=best_response)
        sset = mmwu.ConvexStateSet.min_entropy_at_least(k, d)
        eps_mm = min(eps, delta) / 2.0 if min(eps, delta) > 0.0 \
            else delta / 2.0
        result = mmwu.minmax_solve(oracle, sset, eps_mm)
        gap = 2.0 * result.value - 1.0
        counts = {}
        for label in result.multiset:
            counts[label] = counts.get(label, 0) + 1
        weights = {lab: n / result.rounds for lab, n in sorted(counts.items())}
        report["universal"] = {"weights": weights, "gap": gap,
                               "value": result.value,
                               "rounds": result.rounds, "eta": result.eta}
        if gap > delta:
            report["branch"] = "universal"

    report["consistent"] = report["branch"] in ("hill", "universal")
    return report


# ---------------------------------------------------------------------------
# Reverse dense-model split
# ---------------------------------------------------------------------------

def reverse_dmt(y, m, z, delta):
    """Transport the convex split y = delta m + (1 - delta) q to a new
    numerator: returns x = delta z + (1 - delta) q, so that x - y equals
    delta (z - m) exactly and every effect sees the substitution at
    weight delta.

    Requires m to be delta-dense in y (the split must exist); delta = 1
    returns z itself.
    """
    ym = _as_density(y)
    mm = _as_density(m)
    zm = _as_density(z)
    if not ym.dim == mm.dim == zm.dim:
        raise StateError("state dimensions differ")
    delta = float(delta)
    if not is_delta_dense(mm, ym, delta):
        raise StateError("m is not delta-dense in y at this delta")
    if delta == 1.0:
        return DensityOperator(zm.mat)
    q = (ym.mat - delta * mm.mat) / (1.0 - delta)
    return DensityOperator(_sym(delta * zm.mat + (1.0 - delta) * q))
