"""In-repo first-order solvers for the package's small SDPs.

Two engines cover every optimization in the package:

* an ADMM (alternating projections with a running dual correction) for
  the min-trace dominating-operator programs behind conditional
  min-entropy and guessing probability, and
* cyclic Dykstra for pure feasibility problems (tomography slabs,
  witness searches).

Both operate on dense complex Hermitian matrices with the Frobenius
inner product.  Diagonal instances are detected structurally and run
the identical update equations on the diagonal vectors, which is what
makes classical joints with supports up to 2^10 cheap.

No external optimizers are used anywhere in the package.
"""

import numpy as np

from . import _kernel

GAP_TOL = 1e-7        # duality-gap stopping rule
RES_TOL = 1e-9        # primal/dual residual target
MAX_ITER = 100_000
DIAG_ATOL = 1e-14


class SolverError(RuntimeError):
    """Non-convergence within the iteration budget; carries residuals."""

    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals or {}


def clip_psd(m):
    """Projection onto the PSD cone (Frobenius)."""
    w, v = _kernel.eigh_batch(m)
    wc = np.maximum(w, 0.0)
    out = _kernel.recombine(wc, v)
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def clip_interval(m, lo, hi):
    """Projection onto {lo*I <= M <= hi*I} by eigenvalue clamping."""
    w, v = _kernel.eigh_batch(m)
    wc = np.clip(w, lo, hi)
    out = _kernel.recombine(wc, v)
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def cap_dominated(m, cap):
    """Projection onto {M <= cap} (operator order)."""
    return cap - clip_psd(cap - m)


def floor_dominating(m, floor):
    """Projection onto {M >= floor} (operator order)."""
    return floor + clip_psd(m - floor)


def project_slab(m, a, lo, hi):
    """Projection onto {lo <= <A, M> <= hi} for Hermitian A, M."""
    na = float(np.real(np.sum(np.conj(a) * a)))
    if na == 0.0:
        return m
    val = float(np.real(np.sum(np.conj(a) * m)))
    if val > hi:
        return m - ((val - hi) / na) * a
    if val < lo:
        return m + ((lo - val) / na) * a
    return m


def project_trace(m, target):
    """Projection onto {tr M = target}."""
    d = m.shape[0]
    return m + ((target - float(np.real(np.trace(m)))) / d) * np.eye(d)


def is_diagonal(m, atol=DIAG_ATOL):
    off = m - np.diag(np.diag(m))
    return float(np.max(np.abs(off))) <= atol if off.size else True


# ---------------------------------------------------------------------------
# ADMM for  min tr Y  s.t.  Y >= A_x  for all x
# (guessing-probability dual; the returned multipliers are the optimal POVM)
# ---------------------------------------------------------------------------

def _admm_core(a_stack, eye, psd_clip, inner, tr, gap_tol, max_iter):
    """Shared ADMM loop over a stack of constraints Y >= A_x.

    a_stack : (K, ...) array of constraint blocks
    eye     : identity element in the block representation
    psd_clip, inner, tr : representation-specific primitives
    """
    k = a_stack.shape[0]
    s = psd_clip(-a_stack.copy())
    u = np.zeros_like(a_stack)
    tau = 1.0
    for it in range(1, max_iter + 1):
        y = np.mean(a_stack + s - u, axis=0) - eye / (k * tau)
        m = y[None, ...] - a_stack + u
        s_new = psd_clip(m)
        u = m - s_new
        dual_res = tau * float(np.sqrt(np.sum(np.abs(s_new - s) ** 2)))
        s = s_new
        primal_res = float(np.sqrt(np.sum(np.abs(y[None, ...] - a_stack - s) ** 2)))
        lam = -tau * u          # PSD by construction of the U update
        primal_val = tr(y)
        dual_val = float(np.sum(inner(a_stack, lam)))
        gap = abs(primal_val - dual_val)
        if gap <= gap_tol and primal_res <= RES_TOL * max(1.0, abs(primal_val)) \
                and dual_res <= RES_TOL * max(1.0, abs(primal_val)):
            return y, lam, {"iterations": it, "gap": gap,
                            "primal_res": primal_res, "dual_res": dual_res}
        # residual balancing keeps iteration counts low on skewed instances
        if it % 50 == 0:
            if primal_res > 10 * dual_res:
                tau *= 2.0
                u /= 2.0
            elif dual_res > 10 * primal_res:
                tau /= 2.0
                u *= 2.0
    raise SolverError(
        "ADMM did not converge within the iteration budget",
        residuals={"primal_res": primal_res, "dual_res": dual_res, "gap": gap,
                   "iterations": max_iter},
    )


def min_trace_dominating(a_list, gap_tol=GAP_TOL, max_iter=MAX_ITER):
    """min tr Y s.t. Y >= A_x for every x.

    Returns (value, Y, multipliers, info).  The multipliers are PSD and
    sum to the identity at convergence: they are the optimal measurement
    for the dual guessing problem max sum_x <A_x, P_x>.
    """
    a_stack = np.stack([np.asarray(a, dtype=np.complex128) for a in a_list])
    d = a_stack.shape[-1]
    if all(is_diagonal(a) for a in a_stack):
        diag = np.real(np.einsum("kii->ki", a_stack)).copy()
        y, lam, info = _admm_core(
            diag, np.ones(d),
            psd_clip=lambda m: np.maximum(m, 0.0),
            inner=lambda a, l: np.sum(a * l, axis=-1),
            tr=lambda y_: float(np.sum(y_)),
            gap_tol=gap_tol, max_iter=max_iter,
        )
        y_m = np.diag(y.astype(np.complex128))
        lam_m = np.stack([np.diag(row.astype(np.complex128)) for row in lam])
        info["diagonal"] = True
        return float(np.sum(y)), y_m, lam_m, info
    y, lam, info = _admm_core(
        a_stack, np.eye(d, dtype=np.complex128),
        psd_clip=clip_psd,
        inner=lambda a, l: np.real(np.einsum("kij,kij->k", np.conj(a), l)),
        tr=lambda y_: float(np.real(np.trace(y_))),
        gap_tol=gap_tol, max_iter=max_iter,
    )
    info["diagonal"] = False
    return float(np.real(np.trace(y))), y, lam, info


def min_trace_bipartite(rho, dx, db, gap_tol=GAP_TOL, max_iter=MAX_ITER):
    """min tr Y s.t. I_X (x) Y >= rho  on a dX*dB system.

    Returns (value, Y, dual, info); the dual is PSD with partial trace
    over X converging to I_B, and <rho, dual> equal to the value.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    d = dx * db
    if rho.shape != (d, d):
        raise ValueError(f"state dim {rho.shape} does not match {dx}x{db}")
    eye_x = np.eye(dx, dtype=np.complex128)
    s = clip_psd(-rho)
    u = np.zeros_like(rho)
    tau = 1.0
    for it in range(1, max_iter + 1):
        t = rho + s - u
        tx = np.trace(t.reshape(dx, db, dx, db), axis1=0, axis2=2)
        y = (tx - np.eye(db) / tau) / dx
        iy = np.kron(eye_x, y)
        m = iy - rho + u
        s_new = clip_psd(m)
        u = m - s_new
        dual_res = tau * float(np.sqrt(np.sum(np.abs(s_new - s) ** 2)))
        s = s_new
        primal_res = float(np.sqrt(np.sum(np.abs(iy - rho - s) ** 2)))
        lam = -tau * u
        primal_val = float(np.real(np.trace(y)))
        dual_val = float(np.real(np.sum(np.conj(rho) * lam)))
        gap = abs(primal_val - dual_val)
        if gap <= gap_tol and primal_res <= RES_TOL * max(1.0, abs(primal_val)) \
                and dual_res <= RES_TOL * max(1.0, abs(primal_val)):
            return primal_val, y, lam, {"iterations": it, "gap": gap,
                                        "primal_res": primal_res,
                                        "dual_res": dual_res}
        if it % 50 == 0:
            if primal_res > 10 * dual_res:
                tau *= 2.0
                u /= 2.0
            elif dual_res > 10 * primal_res:
                tau /= 2.0
                u *= 2.0
    raise SolverError(
        "ADMM did not converge within the iteration budget",
        residuals={"primal_res": primal_res, "dual_res": dual_res, "gap": gap,
                   "iterations": max_iter},
    )


# ---------------------------------------------------------------------------
# Cyclic Dykstra for intersections of convex sets
# ---------------------------------------------------------------------------

def dykstra(z0, projections, violation, tol, max_iter=MAX_ITER,
            stall_window=200, stall_factor=0.999):
    """Dykstra's alternating projections onto an intersection.

    projections : list of maps P_i (each a Frobenius projection)
    violation   : callable z -> float, 0 when z is in the intersection
    Returns (z, info) with info['feasible'] False when the violation
    stalls above tol (certifying nothing, but reported as a stall).
    """
    z = np.array(z0, dtype=np.complex128 if np.iscomplexobj(z0) else np.float64)
    corrections = [np.zeros_like(z) for _ in projections]
    best = np.inf
    last_improve = 0
    viol = violation(z)
    for it in range(1, max_iter + 1):
        for i, proj in enumerate(projections):
            w = z + corrections[i]
            z_new = proj(w)
            corrections[i] = w - z_new
            z = z_new
        viol = violation(z)
        if viol <= tol:
            return z, {"iterations": it, "violation": viol, "feasible": True}
        if viol < best * stall_factor:
            best = viol
            last_improve = it
        elif it - last_improve >= stall_window:
            return z, {"iterations": it, "violation": viol, "feasible": False,
                       "stalled": True}
    return z, {"iterations": max_iter, "violation": viol, "feasible": False,
               "stalled": False}


# ---------------------------------------------------------------------------
# Linear minimization over a capped spectrahedron
# ---------------------------------------------------------------------------

def linear_min_capped(g, cap, tol=1e-13):
    """Minimize <G, W> over {0 <= W <= cap, tr W = 1}.

    cap must be PSD with tr(positive part) >= 1, else the slice is
    infeasible.  Substituting W = cap^{1/2} X cap^{1/2} with 0 <= X <= I
    turns the problem into selecting the negative eigenspace of
    cap^{1/2} (G + mu I) cap^{1/2}; the trace of the selection is
    monotone in mu, so mu is found by bisection and the boundary
    eigenvector is included fractionally to hit tr W = 1 exactly.

    Returns (w, value).
    """
    g = np.asarray(g, dtype=complex)
    c = np.asarray(cap, dtype=complex)
    d = g.shape[0]
    cw, cv = _kernel.eigh_batch(0.5 * (c + c.conj().T))
    if float(np.minimum(cw, 0.0).sum()) < -1e-9:
        raise SolverError("cap matrix is not PSD")
    cw = np.maximum(cw, 0.0)
    if float(cw.sum()) < 1.0 - 1e-9:
        raise SolverError("capped slice is infeasible: tr cap < 1")
    chalf = (cv * np.sqrt(cw)[None, :]) @ cv.conj().T
    m0 = chalf @ g @ chalf
    m0 = 0.5 * (m0 + m0.conj().T)
    cmat = chalf @ chalf

    gw = np.linalg.eigvalsh(0.5 * (g + g.conj().T))
    scale = max(1.0, float(np.max(np.abs(gw))))

    def neg_mass(mu):
        w, v = _kernel.eigh_batch(m0 + mu * cmat)
        sel = w < -1e-12 * scale
        if not np.any(sel):
            return 0.0
        vs = chalf @ v[:, sel]
        return float(np.real(np.einsum("ij,ij->", vs.conj(), vs)))

    lo = -float(gw[-1]) - 1.0
    hi = -float(gw[0]) + 1e-12 * scale
    if neg_mass(lo) < 1.0 - 1e-12:
        # cap so tight the whole slice is one point up to numerics
        lo -= scale
    for _ in range(200):
        if hi - lo <= tol * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        if neg_mass(mid) >= 1.0:
            lo = mid
        else:
            hi = mid

    # assemble on the mass >= 1 side; fractional weight on the last mode
    w, v = _kernel.eigh_batch(m0 + lo * cmat)
    vs = chalf @ v
    masses = np.real(np.einsum("ij,ij->j", vs.conj(), vs))
    theta = np.zeros(d)
    remaining = 1.0
    for i in range(d):
        if w[i] >= -1e-12 * scale and remaining <= 1e-12:
            break
        if masses[i] <= 1e-15:
            continue
        take = min(1.0, remaining / masses[i])
        theta[i] = take
        remaining -= take * masses[i]
        if remaining <= 1e-15:
            break
    if remaining > 1e-9:
        raise SolverError(f"capped linear oracle failed to place mass "
                          f"(residual {remaining:.3e})")
    out = (vs * theta[None, :]) @ vs.conj().T
    out = 0.5 * (out + out.conj().T)
    value = float(np.real(np.einsum("ij,ji->", g, out)))
    return out, value
