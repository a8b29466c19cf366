"""Leakage simulators: build a per-symbol state table that a finite
family of binary distinguishers cannot tell apart from the true
classical-quantum source.

Four routes produce such a table.  The exact route boosts with the
family's true effects; the perturbed route tolerates an approximator
for those effects; the black-box route learns the effects by sampling
tomography and snaps them to a shifted grid so re-runs reproduce bit
for bit; the game route solves the equivalent two-player zero-sum game
and converts the resulting universal distinguisher back into states.
Every route finishes with the same audit: the best family member's
advantage against the table must not exceed the target.

On top of the simulators sit the transfer step (re-attach the table to
a different classical marginal) and the conditional-entropy experiment
that measures how much min-entropy one leaked register actually costs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import mmwu, solvers, tomog
from ._kernel import density_from_log
from .qstate import Bpovm, CqState, DensityOperator, h_min_cond
from .rng import stream

ROUNDS_CONST = 16.0        # boosting length ceil(16 ln d / eps^2), shared with mmwu
SHIFT_DENOM = 24.0         # shift lattice size ceil(24 d^2 T / eps)
GRID_DENOM = 16.0          # rounding grid eps / (16 d)
REEXECUTIONS = 20          # reproducibility trials per candidate shift
SHIFT_CANDIDATES = 8
SAMPLE_CAP = 2 ** 62       # largest honest per-probe sample count
AUDIT_ATOL = 1e-9

__all__ = [
    "AdvantageReport", "DistinguisherFamilyCq", "SimulatorTable",
    "best_distinguisher", "chain_rule_rhill_experiment", "gw_simulate",
    "rounds_for", "shift_collision_fraction", "shift_count_for",
    "simulate_determinized", "simulate_exact", "simulate_minmax",
    "simulate_perturbed",
]


def rounds_for(dim, eps):
    """Boosting length for a dim-level system at advantage target eps."""
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    return max(1, math.ceil(ROUNDS_CONST * math.log(dim) / (eps * eps)))


def shift_count_for(dim, eps):
    """Number of candidate grid shifts; collisions per rounded scalar
    then occur for at most 3 of them."""
    return math.ceil(SHIFT_DENOM * dim * dim * rounds_for(dim, eps) / eps)


# ---------------------------------------------------------------------------
# Families, tables, reports
# ---------------------------------------------------------------------------

class DistinguisherFamilyCq:
    """Finite list of distinguishers for cq-states, each given as a full
    per-symbol effect table {x: Pi_x}.

    All members must cover the same symbol set with effects of one
    common dimension.  Labels default to D0, D1, ...
    """

    __slots__ = ("members", "labels", "symbols", "dim")

    def __init__(self, members, labels=None):
        members = tuple(members)
        if not members:
            raise ValueError("family must contain at least one member")
        coerced = []
        for i, member in enumerate(members):
            table = {}
            for sym, eff in dict(member).items():
                table[sym] = eff if isinstance(eff, Bpovm) else Bpovm(eff)
            if not table:
                raise ValueError(f"member {i} has an empty effect table")
            coerced.append(table)
        symbols = tuple(coerced[0])
        key_set = set(symbols)
        for i, table in enumerate(coerced):
            if set(table) != key_set:
                raise ValueError(f"member {i} covers different symbols")
        dims = {eff.dim for table in coerced for eff in table.values()}
        if len(dims) != 1:
            raise ValueError(f"effects have mixed dims {sorted(dims)}")
        if labels is None:
            labels = tuple(f"D{i}" for i in range(len(coerced)))
        else:
            labels = tuple(str(l) for l in labels)
            if len(labels) != len(coerced):
                raise ValueError("labels and members lengths differ")
            if len(set(labels)) != len(labels):
                raise ValueError("duplicate member labels")
        object.__setattr__(self, "members", tuple(coerced))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "dim", dims.pop())

    def __setattr__(self, name, value):
        raise AttributeError("DistinguisherFamilyCq is immutable")

    def __len__(self):
        return len(self.members)

    def effect_stack(self, support):
        """Member effects aligned to a symbol order, as (M, S, d, d)."""
        for sym in support:
            if sym not in self.members[0]:
                raise ValueError(f"family has no effect for symbol {sym!r}")
        return np.stack([[table[sym].mat for sym in support]
                         for table in self.members])

    def __repr__(self):
        return (f"DistinguisherFamilyCq(|F|={len(self.members)}, "
                f"|X|={len(self.symbols)}, dim={self.dim})")


class SimulatorTable:
    """Per-symbol simulator output with its provenance and audit trail."""

    __slots__ = ("outputs", "provenance", "rounds_used", "details")

    def __init__(self, outputs, provenance, rounds_used, details=None):
        out = {}
        for sym, state in dict(outputs).items():
            out[sym] = state if isinstance(state, DensityOperator) \
                else DensityOperator(state)
        if not out:
            raise ValueError("simulator table is empty")
        dims = {s.dim for s in out.values()}
        if len(dims) != 1:
            raise ValueError(f"outputs have mixed dims {sorted(dims)}")
        object.__setattr__(self, "outputs", out)
        object.__setattr__(self, "provenance", str(provenance))
        object.__setattr__(self, "rounds_used", int(rounds_used))
        object.__setattr__(self, "details", dict(details or {}))

    def __setattr__(self, name, value):
        raise AttributeError("SimulatorTable is immutable")

    @property
    def domain(self):
        return tuple(self.outputs)

    def __getitem__(self, sym):
        return self.outputs[sym]

    def stack(self, support):
        return np.stack([self.outputs[sym].mat for sym in support])

    def __repr__(self):
        return (f"SimulatorTable({self.provenance!r}, |X|={len(self.outputs)},"
                f" rounds={self.rounds_used})")


@dataclass(frozen=True)
class AdvantageReport:
    best_member: str
    advantage: float
    per_member: dict = field(repr=False)

    def __iter__(self):
        return iter((self.best_member, self.advantage))


def _advantages(family, support, true_probs, true_stack, sim_probs,
                sim_stack):
    eff = family.effect_stack(support)
    true_acc = np.real(np.einsum("msij,sji->m", eff,
                                 true_probs[:, None, None] * true_stack))
    sim_acc = np.real(np.einsum("msij,sji->m", eff,
                                sim_probs[:, None, None] * sim_stack))
    return true_acc - sim_acc


def best_distinguisher(rho, sim, family):
    """Exhaustive argmax of the family's advantage between the source
    rho and a simulator table (or a transferred cq-state).

    The advantage of a member is sum_x p_x <Pi_x, rho_x> minus the same
    functional on the simulator side, using the simulator's own
    classical marginal when sim is a CqState.
    """
    if not isinstance(rho, CqState):
        raise ValueError("rho must be a CqState")
    if isinstance(sim, SimulatorTable):
        domain = sim.domain
    elif isinstance(sim, CqState):
        domain = sim.support
    else:
        raise ValueError("sim must be a SimulatorTable or CqState")
    if set(domain) != set(rho.support):
        raise ValueError("simulator domain does not match the source support")
    if family.dim != rho.dim_b:
        raise ValueError(f"family dim {family.dim} != source dim {rho.dim_b}")
    if isinstance(sim, SimulatorTable):
        sim_probs = rho.probs
        sim_stack = sim.stack(rho.support)
    else:
        if tuple(domain) != tuple(rho.support):
            raise ValueError("simulator support order must match the source")
        sim_probs = sim.probs
        sim_stack = np.stack([s.mat for s in sim.states])
    rho_stack = np.stack([s.mat for s in rho.states])
    adv = _advantages(family, rho.support, rho.probs, rho_stack, sim_probs,
                      sim_stack)
    best = int(np.argmax(adv))
    per = {family.labels[m]: float(adv[m]) for m in range(len(family))}
    return AdvantageReport(family.labels[best], float(adv[best]), per)


# ---------------------------------------------------------------------------
# Boosting core
# ---------------------------------------------------------------------------

def _check_instance(rho, eps, dim):
    if not isinstance(rho, CqState):
        raise ValueError("rho must be a CqState")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if dim != rho.dim_b:
        raise ValueError(f"family dim {dim} != source dim {rho.dim_b}")
    if float(rho.probs.min()) <= 0.0:
        raise ValueError("zero-probability symbols are not simulatable; "
                         "drop them from the support")


def _boost(probs, rho_stack, select_stack, eps, hook=None,
           bounds=(1.0, 1.0)):
    """Multiplicative-weights loop shared by all simulator routes.

    Each round picks the member with the largest advantage against the
    current iterate (scored with select_stack, the best effects
    available), then updates every symbol's log-weights with the loss
    e*I - Pi built from hook's effects for that member.  Returns the
    averaged iterate, the selection sequence, T and eta.
    """
    s, d = rho_stack.shape[0], rho_stack.shape[1]
    t_rounds = rounds_for(d, eps)
    eta = math.sqrt(math.log(d) / t_rounds)
    weighted = probs[:, None, None] * rho_stack
    true_acc = np.real(np.einsum("msij,sji->m", select_stack, weighted))
    eye = np.eye(d)
    c1, c2 = bounds
    acc = np.zeros((s, d, d), dtype=np.complex128)
    sig_sum = np.zeros((s, d, d), dtype=np.complex128)
    sels = np.empty(t_rounds, dtype=np.int64)
    for t in range(t_rounds):
        sigma = density_from_log(acc)
        cur = np.real(np.einsum("msij,sji->m", select_stack,
                                probs[:, None, None] * sigma))
        m = int(np.argmax(true_acc - cur))
        sels[t] = m
        eff = select_stack[m] if hook is None else hook(m, t)
        e = float(np.real(np.einsum("sij,sji->", eff, weighted)))
        loss = e * eye - eff
        w = np.linalg.eigvalsh(loss)
        lo, hi = float(w[:, 0].min()), float(w[:, -1].max())
        if lo < -c1 - 1e-9 or hi > c2 + 1e-9:
            raise mmwu.MmwuError(
                f"round {t}: loss spectrum [{lo:.6g}, {hi:.6g}] escapes "
                f"[-{c1:.6g}, {c2:.6g}]")
        acc -= eta * loss
        sig_sum += sigma
    return sig_sum / t_rounds, sels, t_rounds, eta


def _audit_values(rho, family, sim_stack):
    rho_stack = np.stack([s.mat for s in rho.states])
    adv = _advantages(family, rho.support, rho.probs, rho_stack, rho.probs,
                      sim_stack)
    best = int(np.argmax(adv))
    return family.labels[best], float(adv[best])


def _finish(rho, family, eps, mean_stack, sels, t_rounds, eta, provenance,
            extra=None):
    best, adv = _audit_values(rho, family, mean_stack)
    if adv > eps + AUDIT_ATOL:
        raise mmwu.MmwuError(
            f"{provenance} audit failed: advantage {adv:.6g} > {eps:.6g}")
    details = {
        "eta": eta,
        "selection_counts": np.bincount(sels,
                                        minlength=len(family)).tolist(),
        "advantage": adv,
        "best_member": best,
    }
    details.update(extra or {})
    outputs = {sym: DensityOperator(mean_stack[i])
               for i, sym in enumerate(rho.support)}
    return SimulatorTable(outputs, provenance, t_rounds, details)


def simulate_exact(rho, family, eps):
    """Boost against the family's true effects.

    The averaged iterate's advantage is bounded by the regret of the
    loop: (c1+c2)(eta + ln d/(eta T)) = eps at T = 16 ln d / eps^2 with
    the exact losses' (1, 1) spectrum bounds.  The audit re-measures it.
    """
    _check_instance(rho, eps, family.dim)
    eff = family.effect_stack(rho.support)
    rho_stack = np.stack([s.mat for s in rho.states])
    mean, sels, t_rounds, eta = _boost(rho.probs, rho_stack, eff, eps)
    return _finish(rho, family, eps, mean, sels, t_rounds, eta, "exact")


def simulate_perturbed(rho, family, eps, perturb):
    """Boost with approximated effects: perturb(mat) stands in for each
    selected member's true effect, and must stay within eps/4 of it in
    operator norm (checked every round).

    Selection still scores with the true effects; only the loss uses
    the approximation, so the loss spectrum can reach the proven
    (1 + eps/2, 1 + eps/2) window instead of the exact route's (1, 1).
    A perturb that returns its input unchanged reproduces simulate_exact
    bit for bit.
    """
    _check_instance(rho, eps, family.dim)
    eff = family.effect_stack(rho.support)
    rho_stack = np.stack([s.mat for s in rho.states])
    cap = eps / 4.0

    def hook(m, t):
        out = np.empty_like(eff[m])
        for x in range(eff.shape[1]):
            cand = np.asarray(perturb(eff[m, x]), dtype=np.complex128)
            cand = (cand + cand.conj().T) / 2.0
            err = float(np.abs(np.linalg.eigvalsh(cand - eff[m, x])).max())
            if err > cap + AUDIT_ATOL:
                raise ValueError(
                    f"perturbation operator-norm {err:.6g} exceeds "
                    f"eps/4 = {cap:.6g}")
            out[x] = cand
        return out

    mean, sels, t_rounds, eta = _boost(
        rho.probs, rho_stack, eff, eps, hook=hook,
        bounds=(1.0 + eps / 2.0, 1.0 + eps / 2.0))
    return _finish(rho, family, eps, mean, sels, t_rounds, eta, "perturbed")


# ---------------------------------------------------------------------------
# Black-box route: tomography, grid rounding, shift search
# ---------------------------------------------------------------------------

def shift_collision_fraction(value, n_shifts, grid, radius):
    """Fraction of shifts delta in [1..n] that place value + (delta/n)*grid
    within radius of a rounding boundary (half-grid points).  For
    radius = grid/n this is at most 3/n for any value."""
    if n_shifts < 1:
        raise ValueError("need at least one shift")
    if grid <= 0.0 or radius < 0.0:
        raise ValueError("grid must be positive and radius nonnegative")
    deltas = np.arange(1, n_shifts + 1, dtype=np.float64)
    v = value + (deltas / n_shifts) * grid
    r = np.abs(v - grid * np.round(v / grid))
    return float(np.mean(grid / 2.0 - r < radius))


def _coerce_blackbox(dists, support, dim):
    members = []
    for i, member in enumerate(dists):
        table = dict(member)
        if set(table) != set(support):
            raise ValueError(f"member {i} covers different symbols than "
                             f"the source")
        for sym, dist in table.items():
            if dist.dim != dim:
                raise ValueError(f"member {i} symbol {sym!r} has dim "
                                 f"{dist.dim} != {dim}")
        members.append(table)
    if not members:
        raise ValueError("family must contain at least one member")
    return members


def simulate_determinized(rho, dists, eps, seed=0):
    """Black-box route: the family is given as sampling oracles, one per
    (member, symbol).  Effects are learned by tomography, shifted by a
    searched lattice offset, and rounded to a fixed grid, so the matrices
    driving the boost are reproducible across re-runs.

    A candidate shift is accepted when 20 fresh re-executions reproduce
    every rounded matrix bit for bit on at least 1 - eps/2 of the x-mass
    (one re-execution suffices when every oracle is exact, since nothing
    is random).  Returns (table, chosen_shift).  The audit scores against
    the learned effects; with exact oracles they equal the truth.
    """
    if not isinstance(rho, CqState):
        raise ValueError("rho must be a CqState")
    d = rho.dim_b
    members = _coerce_blackbox(dists, rho.support, d)
    _check_instance(rho, eps, d)
    support = rho.support
    s = len(support)
    t_rounds = rounds_for(d, eps)
    n_shifts = shift_count_for(d, eps)
    grid = eps / (GRID_DENOM * d)
    # entry-level precision one lattice step fine, else rounded values
    # near a cell boundary would not reproduce
    entry_tol = grid / n_shifts
    eps_tomo = d * entry_tol
    exact_mode = all(getattr(table[sym], "exact", False)
                     for table in members for sym in support)
    reexecs = 1 if exact_mode else REEXECUTIONS
    gamma_tomo = eps / (4.0 * (REEXECUTIONS + 1) * t_rounds)
    need = tomog.value_sample_count(eps_tomo / (8.0 * d),
                                    gamma_tomo / (d * d))
    if not exact_mode and need > SAMPLE_CAP:
        raise tomog.CapacityError(
            f"honest tomography would need {need:.3e} samples per probe; "
            f"use exact oracles at this scale")

    def learn(m, x):
        return np.asarray(tomog.qckt_tomography(
            members[m][support[x]], d, eps_tomo, gamma_tomo).mat)

    est = np.stack([[learn(m, x) for x in range(s)]
                    for m in range(len(members))])
    rho_stack = np.stack([st.mat for st in rho.states])

    shift_rng = stream(seed, "leaksim", "shifts")
    candidates = [int(v) for v in
                  shift_rng.integers(1, n_shifts + 1, size=SHIFT_CANDIDATES)]
    mass_floor = 1.0 - eps / 2.0
    failures = {}
    for delta in candidates:
        offset = (delta / n_shifts) * grid

        def rounded(m, x):
            mat = est[m, x] if exact_mode else learn(m, x)
            return tomog.shift_and_round(mat, offset, grid)

        trajectory = np.empty((t_rounds, s, d, d), dtype=np.complex128)

        def hook(m, t):
            for x in range(s):
                trajectory[t, x] = rounded(m, x)
            return trajectory[t]

        mean, sels, _, eta = _boost(
            rho.probs, rho_stack, est, eps, hook=hook,
            bounds=(1.0 + eps / 2.0, 1.0 + eps / 2.0))

        ok = np.ones(s, dtype=bool)
        for _ in range(reexecs):
            for t in range(t_rounds):
                m = int(sels[t])
                for x in range(s):
                    if ok[x] and not np.array_equal(rounded(m, x),
                                                    trajectory[t, x]):
                        ok[x] = False
            if float(rho.probs[ok].sum()) < mass_floor - 1e-12:
                break
        mass = float(rho.probs[ok].sum())
        if mass >= mass_floor - 1e-12:
            fam = DistinguisherFamilyCq(
                [{support[x]: Bpovm(solvers.clip_interval(est[m, x], 0.0, 1.0))
                  for x in range(s)} for m in range(len(members))])
            table = _finish(rho, fam, eps, mean, sels, t_rounds, eta,
                            "determinized",
                            extra={"shift": delta, "shift_count": n_shifts,
                                   "grid": grid, "mass": mass,
                                   "exact_oracles": exact_mode})
            return table, delta
        failures[delta] = 1.0 - mass
    raise solvers.SolverError(
        f"no shift among {len(candidates)} candidates reproduced the "
        f"rounded matrices on {mass_floor:.3g} of the x-mass",
        residuals={"failure_mass": failures})


# ---------------------------------------------------------------------------
# Game route
# ---------------------------------------------------------------------------

def simulate_minmax(rho, family, eps):
    """Solve the zero-sum game between simulator cq-states (fixed
    classical marginal) and family members, payoff
    <a, ((E_m + 1) I - Pi_m) / 2>, so a member's advantage against a
    table is an affine function of its payoff.

    The round multiset is derandomized by sampling and converted into a
    candidate table: the top-eigenvector state of each symbol's mean
    effect, found by sampling-based search.  That conversion carries no
    per-member guarantee, so it is kept only if its audit passes;
    otherwise the averaged game iterate, whose advantage is bounded by
    eps through the regret certificate, is returned instead.  The
    details record both advantages and which route survived.
    """
    _check_instance(rho, eps, family.dim)
    s, d = rho.nsymbols, rho.dim_b
    dim = s * d
    eff = family.effect_stack(rho.support)
    rho_stack = np.stack([st.mat for st in rho.states])
    weighted = rho.probs[:, None, None] * rho_stack
    e_true = np.real(np.einsum("msij,sji->m", eff, weighted))
    payoffs = np.zeros((len(family), dim, dim), dtype=np.complex128)
    for m in range(len(family)):
        for x in range(s):
            blk = slice(x * d, (x + 1) * d)
            payoffs[m, blk, blk] = ((e_true[m] + 1.0) * np.eye(d)
                                    - eff[m, x]) / 2.0

    iterate_sum = np.zeros((dim, dim), dtype=np.complex128)
    calls = [0]

    def respond(a):
        calls[0] += 1
        iterate_sum[:] += a.mat
        scores = np.real(np.einsum("mij,ji->m", payoffs, a.mat))
        j = int(np.argmax(scores))
        return j, payoffs[j]

    sset = mmwu.ConvexStateSet.cq_fixed_marginal(rho.probs, d)
    result = mmwu.minmax_solve(mmwu.GameOracle(respond), sset, eps, seed=0)

    abar = iterate_sum / calls[0]
    averaged = np.empty((s, d, d), dtype=np.complex128)
    for x in range(s):
        blk = slice(x * d, (x + 1) * d)
        averaged[x] = abar[blk, blk] / rho.probs[x]

    # universal-distinguisher conversion: empirical member weights from
    # sampled rounds, then a best-accepted state per symbol
    t_der = tomog.derand_sample_count(s, d, eps / 2.0)
    idx = stream(0, "leaksim", "derand").integers(0, result.rounds,
                                                  size=t_der)
    wts = np.bincount(np.asarray(result.multiset, dtype=np.int64)[idx],
                      minlength=len(family)) / t_der
    mean_eff = np.einsum("m,msij->sij", wts, eff)
    seeds = stream(0, "leaksim", "maxsat").integers(0, 2 ** 63 - 1, size=s)
    maxsat = np.empty((s, d, d), dtype=np.complex128)
    for x in range(s):
        probe = tomog.SamplingDistinguisher(
            Bpovm(solvers.clip_interval(mean_eff[x], 0.0, 1.0)),
            seed=int(seeds[x]))
        maxsat[x] = tomog.qckt_max_sat(probe, d, eps / 8.0, eps / 8.0).mat

    sel_counts = np.bincount(np.asarray(result.multiset, dtype=np.int64),
                             minlength=len(family)).tolist()
    shared = {
        "eta": result.eta,
        "selection_counts": sel_counts,
        "value": result.value,
        "derand_steps": t_der,
    }
    adv_sat = float(_advantages(family, rho.support, rho.probs, rho_stack,
                                rho.probs, maxsat).max())
    shared["maxsat_advantage"] = adv_sat
    chosen, route = (maxsat, "max-sat") if adv_sat <= eps + AUDIT_ATOL \
        else (averaged, "averaged-iterate")
    shared["route"] = route
    best, adv = _audit_values(rho, family, chosen)
    if adv > eps + AUDIT_ATOL:
        raise mmwu.MmwuError(
            f"minmax audit failed: advantage {adv:.6g} > {eps:.6g}")
    shared["advantage"] = adv
    shared["best_member"] = best
    outputs = {sym: DensityOperator(chosen[i])
               for i, sym in enumerate(rho.support)}
    return SimulatorTable(outputs, "minmax", result.rounds, shared)


# ---------------------------------------------------------------------------
# Transfer and the chain-rule experiment
# ---------------------------------------------------------------------------

def gw_simulate(rho, y_probs, family, eps):
    """Re-attach the simulator table for rho to a different classical
    marginal: the output is sum_y q_y |y><y| (x) sigma_y with the same
    per-symbol states the exact route produced.

    The caller asserts that the two marginals look alike to the family;
    the audit re-checks the combined claim, allowing 2*eps (one eps for
    the simulation, one for the marginal swap)."""
    if not isinstance(rho, CqState):
        raise ValueError("rho must be a CqState")
    q = np.asarray(y_probs, dtype=np.float64)
    if q.shape != (rho.nsymbols,):
        raise ValueError(f"y_probs must have length {rho.nsymbols}")
    if float(q.min()) < -1e-9 or abs(float(q.sum()) - 1.0) > 1e-9:
        raise ValueError("y_probs is not a probability vector")
    table = simulate_exact(rho, family, eps)
    out = CqState(rho.support, q, [table[sym] for sym in rho.support])
    report = best_distinguisher(rho, out, family)
    if report.advantage > 2.0 * eps + AUDIT_ATOL:
        raise mmwu.MmwuError(
            f"transfer audit failed: advantage {report.advantage:.6g} "
            f"> 2*eps = {2.0 * eps:.6g}")
    return out


def _pair_support(rho):
    pairs = []
    for label in rho.support:
        if not isinstance(label, tuple) or len(label) != 2:
            raise ValueError("support labels must be (y, z) pairs")
        pairs.append(label)
    return pairs


def classical_cond_min_entropy(groups):
    """-log2 sum_z max_y q_yz from {z: {y: q}} grouped weights."""
    total = sum(max(ys.values()) for ys in groups.values())
    return -math.log2(total)


def chain_rule_rhill_experiment(rho_XZB, k, ell, family, eps, witness=None):
    """Measure the min-entropy cost of one simulated leakage register.

    The witness is a classical joint over the (y, z) support with
    H_min(Y|Z') >= k (defaults to the source's own marginal); the leaked
    register must hold exactly ell qubits.  The experiment transfers the
    simulator table onto the witness, conditions on (Z', C), and reports
    the measured conditional min-entropy against the k - ell floor plus
    the family advantage against the 2*eps budget.  Both checks land in
    the report as numbers and flags; the floor holds up to solver
    tolerance because the construction is separable across the cut.
    """
    pairs = _pair_support(rho_XZB)
    if witness is None:
        q = np.asarray(rho_XZB.probs, dtype=np.float64)
    else:
        q = np.asarray(witness, dtype=np.float64)
        if q.shape != (len(pairs),):
            raise ValueError(f"witness must have length {len(pairs)}")
        if float(q.min()) < -1e-9 or abs(float(q.sum()) - 1.0) > 1e-9:
            raise ValueError("witness is not a probability vector")
    d = rho_XZB.dim_b
    if ell < 0 or 2 ** int(ell) != d:
        raise ValueError(f"leak register of {ell} qubits does not match "
                         f"dim {d}")
    groups = {}
    for (y, z), w in zip(pairs, q):
        per_y = groups.setdefault(z, {})
        per_y[y] = per_y.get(y, 0.0) + float(w)
    h_witness = classical_cond_min_entropy(groups)
    if h_witness < k - 1e-9:
        raise ValueError(f"witness conditional min-entropy {h_witness:.6g} "
                         f"is below k = {k:.6g}")

    transferred = gw_simulate(rho_XZB, q, family, eps)
    report = best_distinguisher(rho_XZB, transferred, family)

    # condition on (Z', C): per y, block-diagonal over z of the
    # transferred states, weighted by q_{z|y}
    z_order = list(dict.fromkeys(z for _, z in pairs))
    y_order = list(dict.fromkeys(y for y, _ in pairs))
    zpos = {z: i for i, z in enumerate(z_order)}
    side = len(z_order) * d
    y_kept, y_probs, y_blocks = [], [], []
    for y in y_order:
        qy = sum(w for (yy, _), w in zip(pairs, q) if yy == y)
        if qy <= 0.0:
            continue
        block = np.zeros((side, side), dtype=np.complex128)
        for (yy, z), w, st in zip(pairs, q, transferred.states):
            if yy != y:
                continue
            i = zpos[z] * d
            block[i:i + d, i:i + d] = (w / qy) * st.mat
        y_kept.append(y)
        y_probs.append(qy)
        y_blocks.append(block)
    conditioned = CqState(tuple(y_kept), y_probs, y_blocks)
    h_cond = float(h_min_cond(conditioned))

    floor = float(k) - float(ell)
    return {
        "procedure": "chain-rule",
        "k": float(k),
        "ell": int(ell),
        "eps": float(eps),
        "eps_prime": 2.0 * float(eps),
        "h_min_witness": h_witness,
        "h_min_conditioned": h_cond,
        "floor": floor,
        "floor_ok": bool(h_cond >= floor - 1e-6),
        "family_advantage": report.advantage,
        "advantage_ok": bool(report.advantage <= 2.0 * eps + AUDIT_ATOL),
        "best_member": report.best_member,
        "nsymbols": rho_XZB.nsymbols,
        "dim_b": d,
    }
