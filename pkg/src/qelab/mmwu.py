"""Multiplicative-weights evolution over density operators.

Provides the log-domain update with regret accounting, relative-entropy
(Bregman) projections onto convex sets of states, and a repeated-game
solver that returns a multiset of responses certifying an approximate
min-max value.

Divergences in this module are in nats; the update analysis and the
per-round runtime check live in base e.  Convert with log(2) when
comparing against the bit-valued entropies in qstate.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from . import solvers
from ._kernel import eigh_batch, recombine
from .opalg import HermitianOperator, herm_eig, herm_exp, herm_log, mat_of, trace_inner
from .qstate import DensityOperator
from .rng import ensure_rng, stream

ETA_MAX = 0.5
MEMBER_ATOL = 1e-8        # membership slack on the defining constraints
ROUND_CHECK_SLACK = 1e-6  # per-round divergence inequality tolerance
FW_GAP_TOL = 1e-6         # certified first-order gap at a projection (nats)
DUAL_GAP_TOL = 1e-9
BLOCK_ATOL = 1e-10


class MmwuError(ValueError):
    pass


def _sym(m):
    return 0.5 * (m + m.conj().T)


# ---------------------------------------------------------------------------
# Loss matrices and the learner state
# ---------------------------------------------------------------------------

class LossMatrix:
    """A Hermitian loss with certified spectral bounds -c1 I <= L <= c2 I."""

    __slots__ = ("op", "c1", "c2")

    def __init__(self, op, bounds):
        c1, c2 = float(bounds[0]), float(bounds[1])
        h = op if isinstance(op, HermitianOperator) else HermitianOperator(mat_of(op))
        w = h.eig().eigenvalues
        if w[0] > c2 + 1e-9 or w[-1] < -c1 - 1e-9:
            raise MmwuError(
                f"loss spectrum [{w[-1]:.6g}, {w[0]:.6g}] escapes "
                f"[-{c1:.6g}, {c2:.6g}]")
        object.__setattr__(self, "op", h)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)

    def __setattr__(self, name, value):
        raise AttributeError("LossMatrix is immutable")

    @property
    def dim(self):
        return self.op.dim

    @property
    def bounds(self):
        return (self.c1, self.c2)


class MmwuState:
    """Learner state: round counter, log-weights, step size, realized losses.

    weight_log stores log W; the played state is exp(weight_log)
    normalized to unit trace.  States are values: steps return new ones.
    """

    __slots__ = ("t", "weight_log", "eta", "history", "_dens")

    def __init__(self, t, weight_log, eta, history=()):
        eta = float(eta)
        if not 0.0 < eta < ETA_MAX:
            raise MmwuError(f"eta {eta!r} outside (0, {ETA_MAX})")
        wl = weight_log if isinstance(weight_log, HermitianOperator) \
            else HermitianOperator(mat_of(weight_log))
        object.__setattr__(self, "t", int(t))
        object.__setattr__(self, "weight_log", wl)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "history", tuple(float(x) for x in history))
        object.__setattr__(self, "_dens", None)

    def __setattr__(self, name, value):
        raise AttributeError("MmwuState is immutable")

    @classmethod
    def start(cls, dim, eta):
        """Round-zero state with uniform weights (W = I)."""
        return cls(0, HermitianOperator.zeros(dim), eta)

    @property
    def dim(self):
        return self.weight_log.dim

    def density(self):
        """exp(weight_log) / tr exp(weight_log) as a DensityOperator."""
        if self._dens is None:
            dec = self.weight_log.eig()
            w = dec.eigenvalues - dec.eigenvalues[0]
            p = np.exp(w)
            p /= p.sum()
            v = dec.eigenvectors
            object.__setattr__(
                self, "_dens", DensityOperator(_sym((v * p[None, :]) @ v.conj().T)))
        return self._dens

    def log_density(self):
        """log of density(): weight_log shifted by the log partition sum."""
        dec = self.weight_log.eig()
        m = dec.eigenvalues[0]
        lz = m + math.log(float(np.exp(dec.eigenvalues - m).sum()))
        return self.weight_log.mat - lz * np.eye(self.dim)


def mmwu_step(state, loss):
    """One log-domain update: weight_log <- weight_log - eta * L.

    The realized loss <rho_t, L_t> is recorded before the update.
    """
    if loss.dim != state.dim:
        raise MmwuError(f"loss dim {loss.dim} != state dim {state.dim}")
    realized = trace_inner(state.density(), loss.op)
    return MmwuState(state.t + 1,
                     state.weight_log - state.eta * loss.op,
                     state.eta,
                     state.history + (realized,))


def mmwu_step_multiplicative(state, loss):
    """One update in the product form W <- exp(-eta L/2) W exp(-eta L/2).

    Symmetrized so the weight stays Hermitian; coincides with the
    log-domain form exactly when the loss commutes with weight_log.
    Kept for empirical comparison of the two update rules, which differ
    for non-commuting losses.
    """
    if loss.dim != state.dim:
        raise MmwuError(f"loss dim {loss.dim} != state dim {state.dim}")
    realized = trace_inner(state.density(), loss.op)
    half = herm_exp(-0.5 * state.eta * loss.op.mat)
    w_new = half @ herm_exp(state.weight_log.mat) @ half
    return MmwuState(state.t + 1,
                     HermitianOperator(herm_log(_sym(w_new))),
                     state.eta,
                     state.history + (realized,))


def mmwu_regret(state, comparator, losses):
    """Average realized loss vs. comparator loss plus the regret bound.

    Returns (lhs, rhs) with
      lhs = (1/T) sum_t <rho_t, L_t>
      rhs = (1/T) sum_t <sigma, L_t> + (c1+c2) (eta + ln d / (eta T))
    where (c1, c2) are the largest declared bounds among the losses.
    The guarantee under test is lhs <= rhs.
    """
    t = len(losses)
    if t < 1:
        raise MmwuError("regret needs at least one loss")
    if len(state.history) != t:
        raise MmwuError(
            f"history length {len(state.history)} != losses length {t}")
    sig = mat_of(comparator)
    lhs = float(np.mean(state.history))
    comp = float(np.mean([trace_inner(sig, l.op) for l in losses]))
    c1 = max(l.c1 for l in losses)
    c2 = max(l.c2 for l in losses)
    eta = state.eta
    bound = (c1 + c2) * (eta + math.log(state.dim) / (eta * t))
    return lhs, comp + bound


# ---------------------------------------------------------------------------
# Relative entropy (nats)
# ---------------------------------------------------------------------------

def kl_nats(a, b):
    """KL(a || b) in nats; +inf when supp a escapes supp b."""
    am = mat_of(a)
    da = herm_eig(am)
    wa = np.maximum(da.eigenvalues, 0.0)
    ent = float(np.sum(wa[wa > 0.0] * np.log(wa[wa > 0.0])))
    db = herm_eig(mat_of(b))
    wb = db.eigenvalues
    cut = max(float(wb[0]), 1.0) * 1e-12
    on = wb > cut
    if np.any(~on):
        vk = db.eigenvectors[:, ~on]
        leak = float(np.real(np.einsum("ji,jk,ki->", vk.conj(), am, vk)))
        if leak > 1e-12:
            return math.inf
    vs = db.eigenvectors[:, on]
    diag = np.real(np.einsum("ji,jk,ki->i", vs.conj(), am, vs))
    cross = float(np.sum(diag * np.log(wb[on])))
    return ent - cross


def _log_psd(w, v, floor=1e-300):
    lw = np.log(np.maximum(w, floor))
    return _sym((v * lw[None, :]) @ v.conj().T)


# ---------------------------------------------------------------------------
# Convex sets of states
# ---------------------------------------------------------------------------

def _waterfill(targets, caps):
    """Minimize sum r_i log(r_i / t_i) over 0 <= r <= caps, sum r = 1.

    Solution r_i = min(cap_i, nu * t_i) with nu found by bisection on
    the (monotone) total mass.  Coordinates with t_i = 0 are forced to
    zero; if the remaining caps cannot carry unit mass the projection
    has no finite-divergence point.
    """
    t = np.maximum(np.asarray(targets, dtype=float), 0.0)
    caps = np.asarray(caps, dtype=float)
    live = t > 0.0
    if float(caps[live].sum()) < 1.0 - 1e-12:
        raise MmwuError("no finite-divergence point: caps on the support "
                        "carry less than unit mass")

    def mass(nu):
        return float(np.minimum(caps, nu * t).sum())

    hi = 1.0 / max(float(t.sum()), 1e-300)
    for _ in range(200):
        if mass(hi) >= 1.0:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if mass(mid) >= 1.0:
            hi = mid
        else:
            lo = mid
    r = np.minimum(caps, hi * t)
    # exact mass fix on the uncapped coordinates
    free = r < caps - 1e-15
    spare = 1.0 - float(r[~free].sum())
    tot = float(r[free].sum())
    if tot > 0.0:
        r[free] *= spare / tot
    elif abs(spare) > 1e-12:
        # everything capped: the caps must sum to one
        r = caps * (1.0 / float(caps.sum()))
    return r


def _cluster_starts(w, tol):
    """Split a descending eigenvalue array into equal-value clusters."""
    starts = [0]
    for i in range(1, len(w)):
        if w[starts[-1]] - w[i] > tol:
            starts.append(i)
    starts.append(len(w))
    return starts


class ConvexStateSet:
    """A convex set of density operators with projection and oracle support.

    Kinds:
      full-simplex          all densities of a given dimension
      min-entropy-at-least  densities with largest eigenvalue <= 2^-k
      dominated-by          densities with rho <= c * sigma
      cq-fixed-marginal     block-diagonal densities with fixed block traces

    Each kind implements membership, relative-entropy projection, linear
    minimization over the set, and exact feasible sampling.
    """

    def __init__(self, kind, dim, **params):
        self.kind = kind
        self.dim = int(dim)
        if self.dim < 2:
            raise MmwuError("sets need dimension at least 2")
        self.params = params

    @classmethod
    def full_simplex(cls, dim):
        return cls("full-simplex", dim)

    @classmethod
    def min_entropy_at_least(cls, k, dim):
        k = float(k)
        cap = 2.0 ** (-k)
        if k < 0.0 or cap * dim < 1.0 - 1e-12:
            raise MmwuError(
                f"min-entropy floor {k} infeasible at dimension {dim}")
        return cls("min-entropy-at-least", dim, k=k, cap=cap)

    @classmethod
    def dominated_by(cls, c, sigma):
        c = float(c)
        if c <= 0.0:
            raise MmwuError("dominating factor must be positive")
        smat = mat_of(sigma)
        cmat = _sym(c * smat)
        w, v = eigh_batch(cmat)
        if float(w[0]) < -1e-9:
            raise MmwuError("dominating operator must be PSD")
        w = np.maximum(w, 0.0)
        if float(w.sum()) < 1.0 - 1e-9:
            raise MmwuError("dominated-by set is empty: tr(c sigma) < 1")
        self = cls("dominated-by", smat.shape[0], c=c, sigma=smat.copy())
        self._cmat = recombine(w, v)
        self._cw = w
        self._cv = v
        self._chalf = _sym((v * np.sqrt(w)[None, :]) @ v.conj().T)
        cut = max(float(w[-1]), 1.0) * 1e-12
        inv = np.where(w > cut, 1.0 / np.sqrt(np.maximum(w, cut)), 0.0)
        self._cpinvhalf = _sym((v * inv[None, :]) @ v.conj().T)
        self._ctr = float(w.sum())
        return self

    @classmethod
    def cq_fixed_marginal(cls, probs, dim_b):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise MmwuError("marginal must be a probability vector")
        if np.any(p < -1e-12) or abs(float(p.sum()) - 1.0) > 1e-9:
            raise MmwuError("marginal is not a probability vector")
        p = np.maximum(p, 0.0)
        db = int(dim_b)
        return cls("cq-fixed-marginal", p.size * db, probs=p, dim_b=db)

    # -- helpers ----------------------------------------------------------

    def _blocks(self, m):
        db = self.params["dim_b"]
        nx = self.params["probs"].size
        return [m[i * db:(i + 1) * db, i * db:(i + 1) * db] for i in range(nx)]

    def _off_block_mass(self, m):
        db = self.params["dim_b"]
        nx = self.params["probs"].size
        mask = np.ones_like(m, dtype=bool)
        for i in range(nx):
            mask[i * db:(i + 1) * db, i * db:(i + 1) * db] = False
        return float(np.max(np.abs(m[mask]))) if mask.any() else 0.0

    # -- membership -------------------------------------------------------

    def contains(self, rho, atol=MEMBER_ATOL):
        m = mat_of(rho)
        if m.shape != (self.dim, self.dim):
            return False
        if float(np.max(np.abs(m - m.conj().T))) > atol:
            return False
        if abs(float(np.real(np.trace(m))) - 1.0) > atol:
            return False
        w = np.linalg.eigvalsh(_sym(m))
        if float(w[0]) < -atol:
            return False
        if self.kind == "full-simplex":
            return True
        if self.kind == "min-entropy-at-least":
            return float(w[-1]) <= self.params["cap"] + atol
        if self.kind == "dominated-by":
            gap = np.linalg.eigvalsh(self._cmat - _sym(m))
            return float(gap[0]) >= -atol
        if self.kind == "cq-fixed-marginal":
            if self._off_block_mass(m) > atol:
                return False
            p = self.params["probs"]
            for x, blk in enumerate(self._blocks(m)):
                if abs(float(np.real(np.trace(blk))) - p[x]) > atol:
                    return False
            return True
        raise MmwuError(f"unknown set kind {self.kind!r}")

    # -- exact feasible sampling -----------------------------------------

    def _hs_density(self, rng, d):
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        m = g @ g.conj().T
        return m / float(np.real(np.trace(m)))

    def sample(self, rng):
        """Draw a member of the set (exactly feasible, full rank a.s.)."""
        rng = ensure_rng(rng)
        if self.kind == "full-simplex":
            return self._hs_density(rng, self.dim)
        if self.kind == "min-entropy-at-least":
            raw = self._hs_density(rng, self.dim)
            w, v = eigh_batch(raw)
            r = _waterfill(w, np.full(self.dim, self.params["cap"]))
            return _sym((v * r[None, :]) @ v.conj().T)
        if self.kind == "dominated-by":
            xi = self._hs_density(rng, self.dim)
            raw = self._chalf @ xi @ self._chalf
            return self._repair_dominated(raw)
        if self.kind == "cq-fixed-marginal":
            p = self.params["probs"]
            db = self.params["dim_b"]
            out = np.zeros((self.dim, self.dim), dtype=complex)
            for x in range(p.size):
                if p[x] > 0.0:
                    sl = slice(x * db, (x + 1) * db)
                    out[sl, sl] = p[x] * self._hs_density(rng, db)
            return out
        raise MmwuError(f"unknown set kind {self.kind!r}")

    def _repair_dominated(self, raw):
        """Force 0 <= W <= C and tr W = 1 on a nearly feasible point."""
        c = self._cmat
        xi = self._cpinvhalf @ _sym(raw) @ self._cpinvhalf
        xi = solvers.clip_interval(_sym(xi), 0.0, 1.0)
        w = _sym(self._chalf @ xi @ self._chalf)
        tr = float(np.real(np.trace(w)))
        if tr >= 1.0:
            return w / tr
        slack = self._ctr - tr
        if slack <= 1e-15:
            return c / self._ctr
        alpha = (1.0 - tr) / slack
        return _sym(w + alpha * (c - w))

    # -- linear minimization ----------------------------------------------

    def linear_minimizer(self, g):
        """argmin over the set of <G, a>; returns (matrix, value)."""
        gm = _sym(mat_of(g))
        if self.kind == "full-simplex":
            w, v = eigh_batch(gm)
            vec = v[:, 0]
            return np.outer(vec, vec.conj()), float(w[0])
        if self.kind == "min-entropy-at-least":
            cap = self.params["cap"]
            w, v = eigh_batch(gm)
            r = np.zeros(self.dim)
            remaining = 1.0
            for i in range(self.dim):
                take = min(cap, remaining)
                r[i] = take
                remaining -= take
                if remaining <= 0.0:
                    break
            return _sym((v * r[None, :]) @ v.conj().T), float(np.dot(r, w))
        if self.kind == "dominated-by":
            return solvers.linear_min_capped(gm, self._cmat)
        if self.kind == "cq-fixed-marginal":
            p = self.params["probs"]
            db = self.params["dim_b"]
            out = np.zeros((self.dim, self.dim), dtype=complex)
            value = 0.0
            for x in range(p.size):
                if p[x] <= 0.0:
                    continue
                sl = slice(x * db, (x + 1) * db)
                w, v = eigh_batch(_sym(gm[sl, sl]))
                vec = v[:, 0]
                out[sl, sl] = p[x] * np.outer(vec, vec.conj())
                value += p[x] * float(w[0])
            return out, value
        raise MmwuError(f"unknown set kind {self.kind!r}")

    # -- relative-entropy projection ---------------------------------------

    def project(self, tau):
        """KL projection of a density tau onto the set (matrix in, matrix out)."""
        out, _ = self.project_with_log(tau)
        return out

    def project_with_log(self, tau, tau_log=None):
        """Projection plus the matrix log of the result.

        The log comes cheap from each kind's internal representation and
        feeds the per-round divergence check of the game solver.
        """
        m = _sym(mat_of(tau))
        if self.kind == "full-simplex":
            if tau_log is None:
                w, v = eigh_batch(m)
                tau_log = _log_psd(w, v)
            return m, tau_log
        if self.kind == "min-entropy-at-least":
            w, v = eigh_batch(m)
            r = _waterfill(w, np.full(self.dim, self.params["cap"]))
            return _sym((v * r[None, :]) @ v.conj().T), _log_psd(r, v)
        if self.kind == "dominated-by":
            return self._project_dominated(m)
        if self.kind == "cq-fixed-marginal":
            return self._project_cq(m, tau_log)
        raise MmwuError(f"unknown set kind {self.kind!r}")

    def _project_cq(self, m, tau_log):
        if self._off_block_mass(m) > 1e-6:
            raise MmwuError("cq-marginal projection needs a block-diagonal "
                            "state; evolve with block-diagonal losses")
        p = self.params["probs"]
        db = self.params["dim_b"]
        out = np.zeros((self.dim, self.dim), dtype=complex)
        log_out = np.zeros((self.dim, self.dim), dtype=complex)
        for x in range(p.size):
            sl = slice(x * db, (x + 1) * db)
            blk = _sym(m[sl, sl])
            q = float(np.real(np.trace(blk)))
            if p[x] <= 0.0:
                log_out[sl, sl] = math.log(1e-300) * np.eye(db)
                continue
            if q < 1e-14:
                out[sl, sl] = (p[x] / db) * np.eye(db)
                log_out[sl, sl] = math.log(p[x] / db) * np.eye(db)
                continue
            out[sl, sl] = (p[x] / q) * blk
            if tau_log is not None:
                lblk = tau_log[sl, sl]
            else:
                w, v = eigh_batch(blk)
                lblk = _log_psd(w, v)
            log_out[sl, sl] = lblk + math.log(p[x] / q) * np.eye(db)
        return out, log_out

    def _project_dominated(self, tau):
        w, v = eigh_batch(tau)
        if float(w[0]) < 1e-12:
            raise MmwuError("dominated-by projection needs a full-support "
                            "source state")
        if self._ctr - 1.0 <= 1e-9:
            # tr C = 1: the set is the single point C
            cw = np.maximum(self._cw, 1e-300)
            return self._cmat.copy(), _log_psd(cw, self._cv)
        joint = self._try_joint_basis(tau)
        if joint is not None:
            caps, targets, basis = joint
            r = _waterfill(targets, caps)
            return (_sym((basis * r[None, :]) @ basis.conj().T),
                    _log_psd(r, basis))
        tau_log = _log_psd(w, v)
        rho = self._dual_gibbs_project(tau, tau_log)
        rw, rv = eigh_batch(rho)
        return rho, _log_psd(np.maximum(rw, 0.0), rv)

    def _try_joint_basis(self, tau):
        """Joint eigenbasis of (C, tau) when they commute, else None."""
        c = self._cmat
        scale = max(float(np.max(np.abs(c))) * float(np.max(np.abs(tau))), 1e-30)
        comm = c @ tau - tau @ c
        if float(np.max(np.abs(comm))) > 1e-10 * max(1.0, math.sqrt(scale)):
            return None
        w = self._cw[::-1].copy()   # descending
        v = self._cv[:, ::-1].copy()
        tol = max(float(abs(w[0])), 1.0) * 1e-10
        starts = _cluster_starts(w, tol)
        basis = np.zeros_like(v)
        targets = np.zeros(self.dim)
        for a, b in zip(starts[:-1], starts[1:]):
            vc = v[:, a:b]
            sub = _sym(vc.conj().T @ tau @ vc)
            sw, sv = eigh_batch(sub)
            basis[:, a:b] = vc @ sv
            targets[a:b] = sw
        resid = basis.conj().T @ tau @ basis
        off = resid - np.diag(np.diag(resid))
        if float(np.max(np.abs(off))) > 1e-8 * max(1.0, float(np.max(np.abs(tau)))):
            return None
        return w, np.maximum(targets, 0.0), basis

    def _dual_gibbs_project(self, tau, tau_log):
        """Projection onto {rho <= C} via the smooth dual.

        Minimizes F(Lam) = <Lam, C> + ln tr exp(log tau - Lam) over
        Lam >= 0 with accelerated projected gradient, repairs the primal
        Gibbs state to exact feasibility, and certifies the result by a
        first-order gap at the capped linear oracle.
        """
        c = self._cmat
        d = self.dim

        def gibbs(lam):
            w, v = eigh_batch(_sym(tau_log - lam))
            m = float(w[-1])
            e = np.exp(w - m)
            z = float(e.sum())
            rho = recombine(e / z, v)
            return _sym(rho), m + math.log(z)

        def f_val(lam):
            _, lz = gibbs(lam)
            return float(np.real(np.einsum("ij,ji->", lam, c))) + lz

        lam = np.zeros((d, d), dtype=complex)
        y = lam.copy()
        t_acc = 1.0
        step = 1.0
        f_lam = f_val(lam)
        best = None
        for it in range(4000):
            rho_y, lz_y = gibbs(y)
            f_y = float(np.real(np.einsum("ij,ji->", y, c))) + lz_y
            grad = c - rho_y
            while True:
                cand = solvers.clip_psd(y - step * grad)
                diff = cand - y
                quad = f_y + float(np.real(np.einsum("ij,ji->", grad, diff))) \
                    + float(np.real(np.einsum("ij,ji->", diff, diff.conj().T))) / (2 * step)
                f_cand = f_val(cand)
                if f_cand <= quad + 1e-14 or step < 1e-12:
                    break
                step *= 0.5
            if f_cand > f_lam + 1e-14:
                # restart momentum
                y = lam.copy()
                t_acc = 1.0
                continue
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
            y = cand + ((t_acc - 1.0) / t_next) * (cand - lam)
            lam, f_lam, t_acc = cand, f_cand, t_next
            step *= 1.3
            if it % 10 == 9 or it < 3:
                rho_p, _ = gibbs(lam)
                rho_feas = self._repair_dominated(rho_p)
                gap = kl_nats(rho_feas, tau) + f_lam
                if gap <= DUAL_GAP_TOL:
                    best = rho_feas
                    break
                best = rho_feas
        if best is None:
            rho_p, _ = gibbs(lam)
            best = self._repair_dominated(rho_p)
        # certify; fall back to explicit conditional-gradient descent if needed
        rho, info = _fw_polish(self, best, tau, tau_log, FW_GAP_TOL, 2000)
        if info["gap"] > FW_GAP_TOL:
            raise MmwuError(
                f"dominated-by projection failed to certify: gap {info['gap']:.3e}")
        return rho


def kl_project(sigma, sset):
    """Relative-entropy projection of a density onto a convex state set."""
    out = sset.project(mat_of(sigma))
    return DensityOperator(out)


# ---------------------------------------------------------------------------
# Conditional-gradient engine (reference projector and certificate)
# ---------------------------------------------------------------------------

def _fw_polish(sset, rho, tau, tau_log, gap_tol, max_iter):
    """Pairwise conditional-gradient descent on KL(. || tau).

    The iterate is tracked as a convex combination of atoms returned by
    the set's exact linear minimizer; each step moves weight from the
    worst active atom toward the newest one, which avoids the zigzag
    stall of plain steps on active faces.  Every iterate stays feasible,
    and the exit quantity is the certified first-order gap
    max_a <grad, rho - a>.  Returns (rho, info).
    """
    rho = _sym(np.asarray(rho, dtype=complex))
    atoms = [rho.copy()]
    weights = [1.0]
    gap = math.inf
    it = 0
    for it in range(max_iter):
        w, v = eigh_batch(rho)
        grad = _log_psd(np.maximum(w, 0.0), v) - tau_log
        omega, val = sset.linear_minimizer(grad)
        here = float(np.real(np.einsum("ij,ji->", grad, rho)))
        gap = here - val
        if gap <= gap_tol:
            break

        scores = [float(np.real(np.einsum("ij,ji->", grad, a))) for a in atoms]
        j = int(np.argmax(scores))
        pair_dir = omega - atoms[j]
        plain_dir = omega - rho

        def kl_at(direction, g):
            return kl_nats(rho + g * direction, tau)

        gamma = 0.0
        direction = pair_dir
        g_max = weights[j]
        if g_max > 1e-15 and float(np.max(np.abs(pair_dir))) > 1e-14:
            res = minimize_scalar(lambda g: kl_at(pair_dir, g),
                                  bounds=(0.0, g_max), method="bounded",
                                  options={"xatol": 1e-13, "maxiter": 40})
            gamma = float(res.x)
        if gamma <= 1e-15:
            direction = plain_dir
            res = minimize_scalar(lambda g: kl_at(plain_dir, g),
                                  bounds=(0.0, 1.0), method="bounded",
                                  options={"xatol": 1e-13, "maxiter": 40})
            gamma = float(res.x)
            if gamma <= 1e-16:
                gamma = min(2.0 / (it + 2.0), 1e-3)
            weights = [x * (1.0 - gamma) for x in weights]
            atoms.append(omega)
            weights.append(gamma)
        else:
            weights[j] -= gamma
            atoms.append(omega)
            weights.append(gamma)
        rho = _sym(rho + gamma * direction)

        keep = [i for i, x in enumerate(weights) if x > 1e-14]
        atoms = [atoms[i] for i in keep]
        weights = [weights[i] for i in keep]
        if len(atoms) > 96:
            atoms, weights = [rho.copy()], [1.0]
        elif it % 64 == 63:
            # rebuild from the pool to cancel arithmetic drift
            rho = _sym(sum(x * a for x, a in zip(weights, atoms)))
    return rho, {"gap": gap, "iterations": it + 1}


def fw_project(sset, tau, gap_tol=FW_GAP_TOL, max_iter=5000, start=None):
    """Projection by conditional gradient alone; reference implementation.

    Slower than kl_project's closed forms but shares nothing with them,
    so the two routes cross-validate each other.
    """
    m = _sym(mat_of(tau))
    w, v = eigh_batch(m)
    if float(w[0]) < 1e-12:
        raise MmwuError("projection source must have full support")
    tau_log = _log_psd(w, v)
    if start is None:
        if sset.kind == "dominated-by":
            start = sset._repair_dominated(m)
        elif sset.kind == "cq-fixed-marginal":
            start = sset.sample(stream(20260817, "fw-start"))
        else:
            start = np.eye(sset.dim, dtype=complex) / sset.dim
            if sset.kind == "min-entropy-at-least":
                r = _waterfill(np.full(sset.dim, 1.0 / sset.dim),
                               np.full(sset.dim, sset.params["cap"]))
                start = np.diag(r).astype(complex)
    return _fw_polish(sset, start, m, tau_log, gap_tol, max_iter)


# ---------------------------------------------------------------------------
# Repeated-game solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameOracle:
    """Best-response oracle: density -> (strategy id, payoff matrix in [0, I])."""
    best_response: Callable
    payoff_floor: float | None = None


@dataclass(frozen=True)
class MinmaxResult:
    multiset: list
    value: float
    payoff_mean: np.ndarray
    rounds: int
    eta: float

    def __iter__(self):
        return iter((self.multiset, self.value))


def _gate_payoff(f, dim):
    fm = _sym(mat_of(f))
    if fm.shape != (dim, dim):
        raise MmwuError(f"payoff shape {fm.shape} != ({dim}, {dim})")
    w = np.linalg.eigvalsh(fm)
    if float(w[0]) < -1e-9 or float(w[-1]) > 1.0 + 1e-9:
        raise MmwuError(
            f"payoff spectrum [{w[0]:.6g}, {w[-1]:.6g}] escapes [0, 1]")
    return fm


def minmax_solve(oracle, sset, eps, d=None, c_const=16.0, seed=0,
                 trace_path=None, check_samples=3):
    """Approximate min-max point of g(a, b) = <a, f(b)> over a state set.

    Runs T = ceil(c_const * ln d / eps^2) rounds of best response,
    log-domain update with eta = sqrt(ln d / T), normalization, and
    relative-entropy projection onto the set.  Returns the response
    multiset and the certified value min_a <a, mean payoff>, computed
    with the set's exact linear minimizer.

    Every round, the divergence drop toward sampled comparator states is
    checked against eta*<a_t, L> - eta*<a, L> - eta^2 within 1e-6; a
    violation aborts the run, since it would void the regret guarantee.
    """
    if d is None:
        d = sset.dim
    if d < 2:
        raise MmwuError("game dimension must be at least 2")
    eps = float(eps)
    if eps <= 0.0:
        raise MmwuError("eps must be positive")
    rounds = max(1, math.ceil(c_const * math.log(d) / (eps * eps)))
    eta = math.sqrt(math.log(d) / rounds)

    rng = stream(seed, "minmax", "comparators")
    samples = [sset.sample(rng) for _ in range(check_samples)]

    uniform = np.eye(sset.dim, dtype=complex) / sset.dim
    a_mat, a_log = sset.project_with_log(
        uniform, -math.log(sset.dim) * np.eye(sset.dim))

    multiset = []
    payoff_sum = np.zeros((sset.dim, sset.dim), dtype=complex)
    writer = ctx = None
    if trace_path is not None:
        ctx = open(trace_path, "w", newline="")
        writer = csv.writer(ctx)
        writer.writerow(["round", "payoff", "projection_residual"])
    try:
        for t in range(1, rounds + 1):
            bid, f = oracle.best_response(DensityOperator(a_mat))
            fm = _gate_payoff(f, sset.dim)
            pay = float(np.real(np.einsum("ij,ji->", a_mat, fm)))
            multiset.append(bid)
            payoff_sum += fm

            g_log = a_log - eta * fm
            w, v = eigh_batch(_sym(g_log))
            m = float(w[-1])
            e = np.exp(w - m)
            z = float(e.sum())
            pre_mat = _sym(recombine(e / z, v))
            pre_log = g_log - (m + math.log(z)) * np.eye(sset.dim)

            next_mat, next_log = sset.project_with_log(pre_mat, pre_log)

            dlog = next_log - a_log
            for a_s in samples:
                lhs = float(np.real(np.einsum("ij,ji->", a_s, dlog)))
                rhs = eta * pay \
                    - eta * float(np.real(np.einsum("ij,ji->", a_s, fm))) \
                    - eta * eta
                if lhs < rhs - ROUND_CHECK_SLACK:
                    raise MmwuError(
                        f"round {t}: divergence drop {lhs:.3e} fell below "
                        f"the guaranteed {rhs:.3e}")
            if writer is not None:
                resid = float(np.real(np.einsum(
                    "ij,ji->", next_mat, next_log - pre_log)))
                writer.writerow([t, f"{pay:.17g}", f"{resid:.17g}"])
            a_mat, a_log = next_mat, next_log
    finally:
        if ctx is not None:
            ctx.close()

    f_bar = _sym(payoff_sum / rounds)
    _, value = sset.linear_minimizer(f_bar)
    return MinmaxResult(multiset, float(value), f_bar, rounds, eta)


# ---------------------------------------------------------------------------
# Batched adversarial regret sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegretSweep:
    lhs: np.ndarray
    rhs: np.ndarray
    eta: float
    bound: float
    elapsed: float = field(default=0.0)


def _sweep_effect(d, seed, i):
    """Per-sequence fixed random effect with spectrum in [0, 1]."""
    rng = stream(seed, "regret", i)
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, _ = np.linalg.qr(g)
    vals = rng.uniform(0.0, 1.0, d)
    return _sym((q * vals[None, :]) @ q.conj().T)


def sweep_loss(state_density_eig, fixed_effect, t):
    """Adversarial rule: alternate the learner's top-eigenvector projector
    with the sequence's fixed effect."""
    w, v = state_density_eig
    if t % 2 == 0:
        vec = v[..., -1]
        return np.einsum("...i,...j->...ij", vec, vec.conj())
    return fixed_effect


def adversarial_regret_sweep(d, rounds, n_seqs, seed, eta=None):
    """Run n_seqs independent adversarial loss sequences in lockstep.

    Even rounds play the projector onto the learner's current top
    eigenvector, odd rounds a per-sequence fixed random effect; both are
    effects, so the loss bounds are (0, 1).  The comparator is the best
    fixed state in hindsight (bottom eigenvector of the summed loss).
    Matches a sequential mmwu_step run on the same rule to rounding.
    """
    import time
    t0 = time.perf_counter()
    if eta is None:
        eta = math.sqrt(math.log(d) / rounds)
    fixed = np.stack([_sweep_effect(d, seed, i) for i in range(n_seqs)])
    wlog = np.zeros((n_seqs, d, d), dtype=complex)
    lhs_sum = np.zeros(n_seqs)
    loss_sum = np.zeros((n_seqs, d, d), dtype=complex)
    for t in range(rounds):
        w, v = eigh_batch(wlog)
        e = np.exp(w - w[:, -1:])
        p = e / e.sum(axis=1, keepdims=True)
        rho = np.einsum("nij,nj,nkj->nik", v, p, v.conj())
        loss = sweep_loss((w, v), fixed, t)
        lhs_sum += np.real(np.einsum("nij,nji->n", rho, loss))
        loss_sum += loss
        wlog -= eta * loss
    cw, cv = eigh_batch(loss_sum)
    bot = cv[:, :, 0]
    comp = np.real(np.einsum("ni,nij,nj->n", bot.conj(), loss_sum, bot)) / rounds
    bound = (0.0 + 1.0) * (eta + math.log(d) / (eta * rounds))
    return RegretSweep(lhs=lhs_sum / rounds, rhs=comp + bound, eta=eta,
                       bound=bound, elapsed=time.perf_counter() - t0)
