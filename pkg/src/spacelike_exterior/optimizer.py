"""Feasible descent for the discrete energy.

The search direction is the gradient preconditioned by one algebraic
multigrid V-cycle on the P1 Laplacian of the free nodes.  Near |grad u| = 0
that Laplacian is the Hessian of the area term, so unit steps are natural
and the iteration count hardly depends on the mesh size.  Steps are accepted
by an Armijo test that also keeps every simplex strictly inside the light
cone.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .boundary_data import boundary_lipschitz_constant, extend_to_feasible
from .errors import (
    CutoffTooTight,
    DegenerateCell,
    NoFeasibleStart,
    NotLipschitzEnough,
    StalledInfeasible,
)
from .functional import (
    ScalarField,
    cell_centroid,
    energy_change,
    gradient_sq_max,
    irregular_gradient_sq,
    residual_gradient,
    total_energy,
)

ARMIJO_C1 = 1e-4
DELTA_START = 1e-2
ALPHA_MIN = 1e-20


@dataclass
class SolverParams:
    """Iteration controls.  All values are recorded in the report."""

    max_iterations: int = 2000
    tol_E: float = 1e-12
    tol_g: float = 1e-8
    delta_floor: float = 1e-6
    beta: float = 0.5
    alpha0: float = 1.0
    accelerate: bool = True
    eps: float = None
    metric: bool = True
    blend: bool = True

    def __post_init__(self):
        for name in ("max_iterations", "tol_E", "tol_g", "delta_floor", "alpha0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.delta_floor > 0.5:
            raise ValueError("delta_floor must not exceed 0.5")
        if self.eps is not None and not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SolveReport:
    iterations: int
    energy: object
    residual: float
    margin: float
    energy_trace: list
    reason: str
    delta: float
    near_degenerate: int = 0
    worst_cell: object = None
    params: dict = field(default_factory=dict)
    start: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def converged(self):
        # an exactly vanishing gradient is stationarity, not a stall
        return self.reason in ("converged", "zero gradient")

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "energy": self.energy.to_dict(),
            "residual": self.residual,
            "margin": self.margin,
            "delta": self.delta,
            "near_degenerate_cells": self.near_degenerate,
            "worst_cell": None if self.worst_cell is None else np.asarray(self.worst_cell).tolist(),
            "reason": self.reason,
            "converged": self.converged,
            "energy_trace": list(self.energy_trace),
            "params": self.params,
            "start": self.start,
            "seconds": self.seconds,
        }


# --------------------------------------------------------------------------
# preconditioner


METRIC_WMAX = 1e3


def _simplex_weights(grid, u):
    """Per-simplex diffusivity: 1 (Laplacian) or the lagged metric 1/sqrt(1 - |grad u|^2)."""
    n = grid.n
    offs, axis = grid.perm_tables
    w = np.zeros((n, grid.num_nodes))
    if u is None:
        _kernels.regular_stiffness_weights(grid.cube_base, grid.cube_bits, offs, axis, w)
        wi = np.ones(grid.irr_vol.size)
    else:
        _kernels.regular_metric_weights(u.values, grid.cube_base, grid.cube_bits, offs, axis, grid.h,
                                        METRIC_WMAX, w)
        q = irregular_gradient_sq(grid, u.values)
        wi = 1.0 / np.sqrt(np.maximum(1.0 - q, METRIC_WMAX**-2))
    return w, wi


def stiffness_matrix(grid, u=None, coupling=False):
    """P1 stiffness on the free nodes, and their indices.

    With ``u`` given every simplex is weighted by 1/sqrt(1 - |grad u|^2)
    (the isotropic part of the area Hessian at ``u``).  With ``coupling``
    the free-to-pinned block is returned as well: ``(K, free, K_fp, pinned)``.
    """
    free = np.flatnonzero(grid.free)
    pinned = np.asarray(grid.pinned)
    act = np.concatenate([free, pinned])
    pos = np.full(grid.num_nodes, -1, dtype=np.int64)
    pos[act] = np.arange(act.size)
    n = grid.n
    w, wi = _simplex_weights(grid, u)
    w *= grid.simplex_volume / grid.h**2
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.num_nodes)
    for a in range(n):
        i = np.flatnonzero(w[a])
        j = i + grid.strides[a]
        c = w[a, i]
        diag += np.bincount(i, weights=c, minlength=grid.num_nodes)
        diag += np.bincount(j, weights=c, minlength=grid.num_nodes)
        keep = (pos[i] >= 0) & (pos[j] >= 0)
        rows += [pos[i[keep]], pos[j[keep]]]
        cols += [pos[j[keep]], pos[i[keep]]]
        vals += [-c[keep], -c[keep]]
    if grid.irr_vol.size:
        inv = grid.irr_inv
        # barycentric gradients: columns of inv for vertices 1..n, minus their sum for vertex 0
        grads = np.concatenate([-inv.sum(axis=2, keepdims=True), inv], axis=2)
        local = (grid.irr_vol * wi)[:, None, None] * np.einsum("mka,mkb->mab", grads, grads)
        v = grid.irr_verts
        ii = np.repeat(v[:, :, None], n + 1, axis=2)
        jj = np.repeat(v[:, None, :], n + 1, axis=1)
        pi, pj = pos[ii.ravel()], pos[jj.ravel()]
        keep = (pi >= 0) & (pj >= 0)
        rows.append(pi[keep])
        cols.append(pj[keep])
        vals.append(local.ravel()[keep])
    rows.append(np.arange(act.size))
    cols.append(np.arange(act.size))
    vals.append(diag[act])
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(act.size, act.size),
    ).tocsr()
    K.sum_duplicates()
    m = free.size
    if coupling:
        return K[:m, :m].tocsr(), free, K[:m, m:].tocsr(), pinned
    return K[:m, :m].tocsr(), free


def _amg(K):
    """Smoothed-aggregation hierarchy built under a fixed global RNG state.

    pyamg draws its spectral-radius start vectors from ``np.random``; pinning
    that state keeps repeated solves bit-for-bit identical.
    """
    import pyamg

    state = np.random.get_state()
    np.random.seed(0)
    try:
        return pyamg.smoothed_aggregation_solver(K, symmetry="symmetric", max_coarse=500)
    finally:
        np.random.set_state(state)


class Preconditioner:
    """Symmetric V-cycle approximating the inverse stiffness on free nodes.

    Without ``u`` this is the plain Laplacian; with ``u`` it is the lagged
    metric stiffness of :func:`stiffness_matrix`.
    """

    def __init__(self, grid, u=None):
        self.grid = grid
        self.metric = u is not None
        self.K, self.free = stiffness_matrix(grid, u)
        self.ml = _amg(self.K)
        self._M = self.ml.aspreconditioner(cycle="V")

    def __call__(self, g):
        out = np.zeros_like(g.values)
        out[self.free] = self._M @ g.values[self.free]
        return ScalarField(g.grid, out)


# --------------------------------------------------------------------------
# line search and audit


def feasibility_audit(u, delta=0.0, exclude_farfield=False):
    """Margin 1 - max simplex |grad u|, where it occurs and the near-cone count.

    The count is the number of simplices with |grad u| > 1 - 10*delta.  With
    ``exclude_farfield`` the simplices in the shell next to the truncation
    sphere are left out (see :func:`analysis.compact_margin`).
    """
    from .analysis import compact_margin, count_above

    if exclude_farfield:
        margin, where = compact_margin(u)
    else:
        q, cell = gradient_sq_max(u)
        margin, where = 1.0 - float(np.sqrt(q)), cell_centroid(u.grid, cell)
    count = count_above(u, 1.0 - 10.0 * delta) if delta > 0 else 0
    return margin, where, count


def _armijo(u, direction, alpha, params, spec, slope, delta):
    """Returns (u', alpha', exact energy change, whether the cone cap rejected a step)."""
    cap = (1.0 - delta) ** 2
    a = float(alpha)
    capped = False
    while a >= ALPHA_MIN:
        dE, qmax = energy_change(u, direction, a, spec)
        if qmax > cap:
            capped = True
        elif dE <= -ARMIJO_C1 * a * abs(slope):
            return ScalarField(u.grid, u.values + a * direction.values), a, dE, capped
        a *= params.beta
    raise StalledInfeasible(
        f"no feasible decreasing step above {ALPHA_MIN:g} (slope {slope:.3e}, delta {delta:g})"
    )


def backtracking_step(u, direction, alpha, params, spec, slope=None, delta=None):
    """Armijo step along ``direction`` inside the strict light cone.

    Returns ``(u', alpha')`` with ``alpha' = alpha * beta**k`` for the first k
    giving max |grad u'| <= 1 - delta and
    I(u') <= I(u) - c1 * alpha' * |<g, direction>|.  When the directional
    derivative vanishes the contract degenerates and ``(u, 0.0)`` is returned.
    """
    if slope is None:
        slope = float(np.dot(residual_gradient(u, spec).values, direction.values))
    if slope == 0.0:
        return u, 0.0
    if slope > 0.0:
        raise ValueError("direction is not a descent direction")
    delta = params.delta_floor if delta is None else delta
    new, a, _, _ = _armijo(u, direction, alpha, params, spec, slope, delta)
    return new, a


# --------------------------------------------------------------------------
# driver


def initial_iterate(spec, phi, grid, params):
    """Feasible start from the cutoff extension (with a cone clamp fallback)."""
    info = {}
    try:
        L = boundary_lipschitz_constant(phi, grid)
        info["lipschitz"] = L
        if L >= 1.0:
            raise NotLipschitzEnough(f"boundary Lipschitz estimate {L:.6g} >= 1")
        eps = params.eps if params.eps is not None else 0.9 * (1.0 - L)
        info["eps"] = eps
        try:
            ext = extend_to_feasible(phi, grid, eps, details=True)
            info.update(kind="cutoff extension", R_cut=ext.R_cut, bound=ext.bound)
            w = ext.field
        except CutoffTooTight as exc:
            info.update(kind="cone clamp", cutoff=str(exc))
            w = cone_clamp_start(phi, grid, eps)
    except (NotLipschitzEnough, CutoffTooTight) as exc:
        raise NoFeasibleStart(str(exc)) from exc
    if params.blend and grid.free.any():
        w, theta = harmonic_blend(w, spec)
        info["blend"] = theta
    return w, info


def harmonic_extension(grid, values):
    """Discrete harmonic field with the pinned entries of ``values``."""
    K, free, K_fp, pinned = stiffness_matrix(grid, coupling=True)
    rhs = -(K_fp @ values[pinned])
    out = np.array(values, dtype=float)
    if not np.any(rhs):
        out[free] = 0.0
        return ScalarField(grid, out)
    ml = _amg(K)
    out[free] = ml.solve(rhs, tol=1e-10, accel="cg", maxiter=200)
    return ScalarField(grid, out)


def harmonic_blend(w, spec, steps=30):
    """Move a feasible start towards the discrete harmonic extension.

    The feasible set is convex and max |grad| is convex along the segment,
    so the largest admissible fraction theta is found by bisection.  The
    target margin is min(margin(w), 0.02); the blend is kept only when it
    lowers the energy.  Returns ``(field, theta)``.
    """
    grid = w.grid
    q0, _ = gradient_sq_max(w)
    target = (1.0 - min(1.0 - np.sqrt(q0), 0.02)) ** 2
    d = harmonic_extension(grid, w.values) - w
    dE, q1 = energy_change(w, d, 1.0, spec)
    if q1 <= target:
        theta = 1.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if gradient_sq_max(ScalarField(grid, w.values + mid * d.values))[0] <= target:
                lo = mid
            else:
                hi = mid
        theta = lo
        dE = energy_change(w, d, theta, spec)[0] if theta > 0 else 0.0
    if theta == 0.0 or dE >= 0.0:
        return w, 0.0
    return ScalarField(grid, w.values + theta * d.values), theta


def cone_clamp_start(phi, grid, eps):
    """Lipschitz extension clamped by the cone ||phi|| - (1-eps)(|x| - extent), zero beyond.

    Used when the cutoff radius does not fit inside R_far/2: the envelope is
    (1-eps)-Lipschitz, so the clamp keeps the slope while reaching zero
    before the truncation sphere when R_far is large enough.
    """
    from .boundary_data import boundary_values, limit_gradients, lipschitz_extension

    idx, vals = boundary_values(phi, grid)
    sup = float(np.max(np.abs(vals), initial=0.0))
    L = 1.0 - eps
    reach = grid.obstacle_set.extent + sup / L
    if reach >= grid.R_far:
        raise CutoffTooTight(f"cone clamp needs R_far > {reach:.6g}")
    w = ScalarField.zeros(grid)
    pts = grid.active_points
    r = np.linalg.norm(pts, axis=1)
    sel = r < reach
    psi = lipschitz_extension(pts[sel], grid.positions(idx), vals, L, vals.min(), vals.max())
    b = np.maximum(0.0, sup - L * (r[sel] - grid.obstacle_set.extent))
    w.values[grid.active[sel]] = np.clip(psi, -b, b)
    w.values[idx] = vals
    w.values[grid.farfield_nodes] = 0.0
    limit_gradients(w, 1.0 - eps * (1.0 - 1e-9), min(vals.min(), 0.0), max(vals.max(), 0.0))
    return w


def minimize(spec, phi, grid, params=None, start=None, trace=None, precondition=True):
    """Minimise the discrete energy with the boundary values of ``phi`` pinned.

    ``start`` overrides the extension-based initial iterate (it must be
    strictly feasible and carry the pinned values).  ``trace`` is an optional
    callable receiving one dict per iteration.  The energy trace is
    accumulated from the cancellation-free step changes, so it is exactly
    non-increasing; the final breakdown is recomputed from scratch.
    """
    params = SolverParams() if params is None else params
    clock = time.perf_counter()
    if start is None:
        u, info = initial_iterate(spec, phi, grid, params)
    else:
        u, info = start.copy(), {"kind": "given"}
    try:
        q0, _ = gradient_sq_max(u)
    except DegenerateCell as exc:
        raise NoFeasibleStart(str(exc)) from exc
    margin0 = 1.0 - np.sqrt(q0)
    if margin0 < params.delta_floor:
        raise NoFeasibleStart(f"initial margin {margin0:.3e} below the feasibility floor")
    delta = max(params.delta_floor, min(DELTA_START, 0.5 * margin0))
    pinned = grid.pinned
    pinned_vals = u.values[pinned].copy()

    E_track = total_energy(u, spec).total
    trace_E = [E_track]
    records = []
    g = residual_gradient(u, spec)
    P = None  # search-direction preconditioner
    L = None  # Laplacian preconditioner, fixes the residual norm
    built = 0
    x_prev = None
    alpha = params.alpha0
    k_mom = 0
    reason = "max_iterations"
    res = 0.0
    res_prev = np.inf
    it = 0

    def apply(M, grad):
        return M(grad) if M is not None else ScalarField(grid, grad.values.copy())

    while True:
        if not np.any(g.values):
            reason, res = ("zero gradient" if it == 0 else "converged"), 0.0
            break
        if precondition and (P is None or (params.metric and _stale(it, built, alpha, res_prev, res, params))):
            # built lazily so trivial instances return at once
            P = Preconditioner(grid, u if params.metric else None)
            built, k_mom = it, 0
        d = apply(P, g)
        slope = -float(np.dot(g.values, d.values))
        res_prev, res = res, float(np.sqrt(max(-slope, 0.0)))
        dE_last = trace_E[-2] - trace_E[-1] if len(trace_E) > 1 else 0.0
        if res <= params.tol_g and abs(dE_last) <= params.tol_E and P is not None and P.metric:
            # the metric norm is the weaker one; confirm in the Laplacian norm
            L = L or Preconditioner(grid)
            res = float(np.sqrt(max(float(np.dot(g.values, L(g).values)), 0.0)))
        if res <= params.tol_g and abs(dE_last) <= params.tol_E:
            reason = "converged"
            break
        if it >= params.max_iterations:
            break
        if slope >= 0.0:
            # rounding made the preconditioned direction non-descending
            reason = "no descent direction"
            break
        it += 1
        d.values *= -1.0
        base, base_d, base_slope, shift = u, d, slope, 0.0
        if params.accelerate and x_prev is not None and k_mom > 0:
            mom = k_mom / (k_mom + 3.0)
            step = u - x_prev
            dEy, qy = energy_change(u, step, mom, spec)
            if qy <= (1.0 - delta) ** 2 and dEy <= 0.0:
                y = ScalarField(grid, u.values + mom * step.values)
                gy = residual_gradient(y, spec)
                dy = apply(P, gy)
                sy = -float(np.dot(gy.values, dy.values))
                if sy < 0.0:
                    dy.values *= -1.0
                    base, base_d, base_slope, shift = y, dy, sy, dEy
            else:
                # restart on increase
                k_mom = 0
        try:
            new, a, dE, capped = _armijo(base, base_d, alpha, params, spec, base_slope, delta)
        except StalledInfeasible:
            if base is u:
                raise
            k_mom = 0
            new, a, dE, capped = _armijo(u, d, alpha, params, spec, slope, delta)
            shift = 0.0
        alpha = min(params.alpha0, a / params.beta)
        x_prev, u = u, new
        k_mom += 1
        E_track = E_track + shift + dE
        if E_track > trace_E[-1]:
            raise AssertionError("energy trace increased")
        trace_E.append(E_track)
        if np.any(u.values[pinned] != pinned_vals):
            raise AssertionError("pinned values changed")
        g = residual_gradient(u, spec)
        margin = 1.0 - u.max_gradient()
        # fraction to the boundary: the next step keeps at least half the margin
        delta = max(params.delta_floor, min(DELTA_START, 0.5 * margin))
        rec = {"iteration": it, "energy": E_track, "residual": res, "alpha": a,
               "margin": margin, "delta": delta, "capped": capped}
        records.append(rec)
        if trace is not None:
            trace(rec)
    E = total_energy(u, spec)
    return u, _report(u, E, res, trace_E, reason, delta, it, params, info, records, clock)


def _stale(it, built, alpha, res_prev, res, params):
    """Rebuild the lagged metric once progress slows: short steps or weak residual decay."""
    if it - built < 3:
        return False
    return alpha < params.beta * params.alpha0 or res > 0.7 * res_prev


def _report(u, E, res, trace_E, reason, delta, it, params, info, records, clock):
    margin, where, count = feasibility_audit(u, delta)
    if np.any(np.diff(trace_E) > 0):
        raise AssertionError("energy trace increased")
    return SolveReport(
        iterations=it,
        energy=E,
        residual=res,
        margin=margin,
        energy_trace=trace_E,
        reason=reason,
        delta=delta,
        near_degenerate=count,
        worst_cell=where,
        params=params.to_dict(),
        start=info,
        records=records,
        seconds=time.perf_counter() - clock,
    )
