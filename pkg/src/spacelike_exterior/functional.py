"""Discrete energy of spacelike graphs and its derivatives.

Fields are continuous and piecewise linear on the simplices of an
:class:`~spacelike_exterior.geometry.ExteriorGrid`.  The energy is

    I(u) = sum_simplices vol * (1 - sqrt(1 - |grad u|^2))
         + sum_nodes   vol_i * G(x_i, u_i),     G(x, t) = n * int_0^t H(x, s) ds

with the potential term integrated by nodal (lumped) quadrature.  The area
part is integrated exactly, so its discrete version is convex in the nodal
values.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateCell, InfeasibleField, QuadratureFailure
from .expressions import Expression

FEASIBILITY_SLACK = 1e-12
DEGENERACY_GAP = 1e-14
QUAD_TOL = 1e-10
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(eq=False)
class ScalarField:
    """Nodal values of a piecewise linear field on ``grid``.

    ``values`` is a flat array over all lattice nodes; entries at obstacle and
    outside nodes are ignored and kept at zero.
    """

    grid: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.num_nodes:
            raise ValueError("field size does not match grid")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.num_nodes))

    @classmethod
    def from_function(cls, grid, fun):
        """Sample ``fun(points) -> values`` at every active node."""
        vals = np.zeros(grid.num_nodes)
        vals[grid.active] = fun(grid.active_points)
        return cls(grid, vals)

    def copy(self):
        return ScalarField(self.grid, self.values.copy())

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __mul__(self, a):
        return ScalarField(self.grid, self.values * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def sup_norm(self, nodes=None):
        idx = self.grid.active if nodes is None else nodes
        return float(np.max(np.abs(self.values[idx]), initial=0.0))

    def max_gradient(self):
        return float(np.sqrt(gradient_sq_max(self)[0]))


def _vals(x):
    return x.values if isinstance(x, ScalarField) else np.asarray(x, dtype=float)


# --------------------------------------------------------------------------
# simplex kernels


def _irregular_gradients(grid, u):
    v = grid.irr_verts
    du = u[v[:, 1:]] - u[v[:, :1]]
    return np.einsum("mij,mj->mi", grid.irr_inv, du)


def _regular_pass(grid, u, flux=None, limit=np.inf):
    offs, axis = grid.perm_tables
    out = np.zeros(0) if flux is None else flux
    return _kernels.regular_area(
        u, grid.cube_base, grid.cube_bits, offs, axis, grid.h, grid.simplex_volume,
        out, flux is not None, limit,
    )


def gradient_sq_max(u):
    """Largest |grad u|^2 over active simplices and where it occurs.

    Returns ``(qmax, cell)`` with ``cell`` a tuple ``("regular", perm, cube)``
    or ``("irregular", k)``; ``cube`` indexes ``grid.cube_base``.
    """
    grid = u.grid
    _, _, best, c, p = _regular_pass(grid, u.values)
    where = ("regular", int(p), int(c)) if c >= 0 else None
    if grid.irr_vol.size:
        q = irregular_gradient_sq(grid, u.values)
        k = int(np.argmax(q))
        if q[k] > best:
            best, where = float(q[k]), ("irregular", k)
    return float(best), where


def irregular_gradient_sq(grid, values):
    g = _irregular_gradients(grid, values)
    return np.einsum("mi,mi->m", g, g)


def dirichlet_seminorm(v):
    """sqrt(sum_simplices vol*|grad v|^2), with no feasibility check."""
    grid = v.grid
    _, dirichlet, _, _, _ = _regular_pass(grid, _vals(v))
    if grid.irr_vol.size:
        dirichlet += float(np.sum(grid.irr_vol * irregular_gradient_sq(grid, _vals(v))))
    return float(np.sqrt(dirichlet))


def cell_centroid(grid, cell):
    """Centroid of a simplex reference returned by :func:`gradient_sq_max`."""
    if cell is None:
        return None
    if cell[0] == "irregular":
        return grid.positions(grid.irr_verts[cell[1]]).mean(axis=0)
    _, p, c = cell
    offs, _ = grid.perm_tables
    return grid.lattice_points(grid.cube_base[c] + offs[p]).mean(axis=0)


def _area(u, want_flux=False, strict=False):
    """Area energy, sum of vol*|grad u|^2, max |grad u|^2 and optional nodal flux."""
    grid = u.grid
    limit = (1.0 - DEGENERACY_GAP) ** 2 if strict else (1.0 + FEASIBILITY_SLACK) ** 2
    flux = np.zeros(grid.num_nodes) if want_flux else None
    energy, dirichlet, qmax, _, _ = _regular_pass(grid, u.values, flux, limit)
    _check_q(qmax, strict)
    if grid.irr_vol.size:
        g = _irregular_gradients(grid, u.values)
        q = np.einsum("mi,mi->m", g, g)
        qmax = max(qmax, float(q.max()))
        _check_q(qmax, strict)
        root = np.sqrt(np.maximum(1.0 - q, 0.0))
        energy += float(np.sum(grid.irr_vol * q / (1.0 + root)))
        dirichlet += float(np.sum(grid.irr_vol * q))
        if want_flux:
            s = g * (grid.irr_vol / root)[:, None]
            c = np.einsum("mij,mi->mj", grid.irr_inv, s)
            v = grid.irr_verts
            size = grid.num_nodes
            flux += np.bincount(v[:, 1:].ravel(), weights=c.ravel(), minlength=size)
            flux -= np.bincount(v[:, 0], weights=c.sum(axis=1), minlength=size)
    return energy, dirichlet, qmax, flux


def _check_q(qmax, strict):
    if strict:
        if qmax >= (1.0 - DEGENERACY_GAP) ** 2:
            raise DegenerateCell(f"|grad u| = {np.sqrt(qmax):.15g} reaches the light cone")
    elif qmax > (1.0 + FEASIBILITY_SLACK) ** 2:
        raise InfeasibleField(f"|grad u| = {np.sqrt(qmax):.15g} exceeds 1")


def area_change(u, d, alpha):
    """I0(u + alpha*d) - I0(u) without cancellation, and the new max |grad|^2."""
    grid = u.grid
    offs, axis = grid.perm_tables
    delta, qmax = _kernels.regular_change(
        u.values, d.values, float(alpha), grid.cube_base, grid.cube_bits, offs,
        grid.h, grid.simplex_volume, axis.shape[0], grid.n,
    )
    if qmax >= 1.0:
        return np.inf, qmax
    if grid.irr_vol.size:
        gu = _irregular_gradients(grid, u.values)
        gd = _irregular_gradients(grid, d.values)
        q0 = np.einsum("mi,mi->m", gu, gu)
        # q1 - q0 = alpha * gd . (2 gu + alpha gd)
        dq = alpha * np.einsum("mi,mi->m", gd, 2.0 * gu + alpha * gd)
        q1 = q0 + dq
        qmax = max(qmax, float(q1.max()))
        if qmax >= 1.0:
            return np.inf, qmax
        delta += float(np.sum(grid.irr_vol * dq / (np.sqrt(1.0 - q0) + np.sqrt(1.0 - q1))))
    return delta, qmax


# --------------------------------------------------------------------------
# curvature


class CurvatureSpec:
    """Prescribed mean curvature H(x, t) with its integrability envelope.

    Parameters
    ----------
    form : {"zero", "x-only", "separable", "general"}
    dimension : int
    H : str, optional
        Expression for H (x-only or general forms).
    f, g : str, optional
        Factors of a separable rule ``H(x, t) = f(x) * g(t)``.
    envelope : str, optional
        Expression for h(x) with ``n |H(x, t)| <= h(x)``.  Defaults to
        ``n |H(x)|`` for the x-only form.
    s : float, optional
        Integrability exponent of the envelope, in ``[1, 2n/(n+2)]``.
    nondecreasing : bool, optional
        Declared monotonicity of H in t (enables the uniqueness claim).
    """

    FORMS = ("zero", "x-only", "separable", "general")

    def __init__(self, form="zero", dimension=3, H=None, f=None, g=None,
                 envelope=None, s=None, nondecreasing=None):
        if form not in self.FORMS:
            raise ValueError(f"unknown curvature form {form!r}")
        self.form = form
        self.n = int(dimension)
        s_max = 2.0 * self.n / (self.n + 2)
        self.H_expr = self.f_expr = self.g_expr = None
        if form == "x-only":
            self.H_expr = Expression(H, self.n)
        elif form == "general":
            self.H_expr = Expression(H, self.n, allow_t=True)
        elif form == "separable":
            self.f_expr = Expression(f, self.n)
            self.g_expr = Expression(g, 1, allow_t=True)
        if envelope is not None:
            self.envelope_expr = Expression(envelope, self.n)
        elif form in ("zero", "x-only"):
            self.envelope_expr = None
        else:
            raise ValueError("an envelope h(x) is required for t-dependent curvature")
        if s is None:
            if form in ("separable", "general"):
                raise ValueError("the exponent s is required for t-dependent curvature")
            s = 1.0
        self.s = float(s)
        if not 1.0 <= self.s <= s_max + 1e-12:
            raise ValueError(f"s={self.s} outside [1, {s_max:.6g}]")
        if nondecreasing is None:
            nondecreasing = form in ("zero", "x-only")
        self.nondecreasing = bool(nondecreasing)
        self._cache = {}

    @classmethod
    def zero(cls, dimension=3):
        return cls("zero", dimension)

    def to_dict(self):
        out = {"form": self.form, "dimension": self.n, "s": self.s,
               "nondecreasing": self.nondecreasing}
        for key, e in (("H", self.H_expr), ("f", self.f_expr), ("g", self.g_expr),
                       ("envelope", self.envelope_expr)):
            if e is not None:
                out[key] = e.source
        return out

    @property
    def s_conjugate(self):
        return np.inf if self.s == 1.0 else self.s / (self.s - 1.0)

    def H(self, x, t):
        x = np.atleast_2d(x)
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:1])
        if self.form == "zero":
            return np.zeros(x.shape[0])
        if self.form == "x-only":
            return self.H_expr(x)
        if self.form == "separable":
            return self.f_expr(x) * self.g_expr(np.zeros((t.size, 1)), t)
        return self.H_expr(x, t)

    def envelope(self, x):
        x = np.atleast_2d(x)
        if self.envelope_expr is not None:
            return self.envelope_expr(x)
        if self.form == "zero":
            return np.zeros(x.shape[0])
        return self.n * np.abs(self.H_expr(x))

    def G(self, x, t):
        """n * int_0^t H(x, s) ds, vectorised over points."""
        x = np.atleast_2d(x)
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:1])
        return self.G_increment(x, np.zeros_like(t), t)

    def G_increment(self, x, t0, t1, fx=None):
        """n * int_{t0}^{t1} H(x, s) ds.  ``fx`` may carry cached x-factors."""
        x = np.atleast_2d(x)
        t0 = np.broadcast_to(np.asarray(t0, dtype=float), x.shape[:1])
        t1 = np.broadcast_to(np.asarray(t1, dtype=float), x.shape[:1])
        if self.form == "zero":
            return np.zeros(x.shape[0])
        if self.form == "x-only":
            Hx = self.H_expr(x) if fx is None else fx
            return self.n * Hx * (t1 - t0)
        if self.form == "separable":
            fx = self.f_expr(x) if fx is None else fx
            dummy = np.zeros((1, 1))
            return self.n * fx * _integrate(lambda s, sel: self.g_expr(dummy, s), t0, t1)
        return self.n * _integrate(lambda s, sel: self.H_expr(x[sel], s), t0, t1)

    # nodal caches -------------------------------------------------------
    def _nodal(self, grid):
        key = id(grid)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is grid:
            return hit[1]
        pts = grid.active_points
        data = {"x": pts, "w": grid.node_vol[grid.active]}
        if self.form == "x-only":
            data["fx"] = self.H_expr(pts)
        elif self.form == "separable":
            data["fx"] = self.f_expr(pts)
        data["h"] = self.envelope(pts)
        self._cache = {key: (grid, data)}
        return data

    def nodal_H(self, grid, values):
        """n * H(x_i, u_i) at active nodes."""
        d = self._nodal(grid)
        t = values[grid.active]
        if self.form == "zero":
            return np.zeros(t.size)
        if self.form == "x-only":
            return self.n * d["fx"]
        if self.form == "separable":
            return self.n * d["fx"] * self.g_expr(np.zeros((t.size, 1)), t)
        return self.n * self.H_expr(d["x"], t)

    def nodal_G(self, grid, t0, t1):
        d = self._nodal(grid)
        return self.G_increment(d["x"], t0, t1, fx=d.get("fx"))


def _integrate(fun, t0, t1, tol=QUAD_TOL, max_panels=1024):
    """Vectorised composite Gauss-Legendre on [t0, t1], refined by panel doubling.

    ``fun(s, sel)`` evaluates the integrand at abscissae ``s`` for the subset
    ``sel`` of integration problems.
    """
    m = t0.size
    out = np.zeros(m)
    todo = np.flatnonzero(t1 != t0)
    prev = _composite(fun, t0, t1, todo, 1)
    panels = 2
    while todo.size:
        cur = _composite(fun, t0, t1, todo, panels)
        done = np.abs(cur - prev) <= tol * np.maximum(1.0, np.abs(cur))
        out[todo[done]] = cur[done]
        todo, prev = todo[~done], cur[~done]
        panels *= 2
        if todo.size and panels > max_panels:
            raise QuadratureFailure(
                f"G quadrature did not reach {tol:g} on {todo.size} points"
            )
    return out


def _composite(fun, t0, t1, sel, panels):
    a, b = t0[sel], t1[sel]
    span = b - a
    acc = np.zeros(sel.size)
    for j in range(panels):
        for xk, wk in zip(_GL_X, _GL_W):
            s = a + span * ((j + xk) / panels)
            acc += wk * fun(s, sel)
    return acc * span / panels


# --------------------------------------------------------------------------
# energies


@dataclass
class EnergyBreakdown:
    area: float
    potential: float
    total: float
    grad_l2: float
    u_norm: float

    def to_dict(self):
        return dict(self.__dict__)


def area_energy(u):
    """Exact integral of 1 - sqrt(1 - |grad u|^2) over the discrete domain."""
    return _area(u)[0]


def potential_G(x, t, spec):
    """G(x, t) = n * int_0^t H(x, s) ds at a single point or an array of points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = spec.G(np.atleast_2d(x), t)
    return float(out[0]) if single else out


def weighted_norm(grid, nodal, p):
    """Discrete L^p norm of active-node values with lumped weights."""
    w = grid.node_vol[grid.active]
    a = np.abs(nodal)
    if np.isinf(p):
        return float(a.max(initial=0.0))
    return float(np.sum(w * a**p) ** (1.0 / p))


def potential_energy(u, spec):
    """Lumped potential energy and its Hoelder bound ``||h||_s ||u||_s'``.

    Returns
    -------
    value, bound : float
    """
    grid = u.grid
    t = u.values[grid.active]
    G = spec.nodal_G(grid, np.zeros_like(t), t)
    value = float(np.sum(grid.node_vol[grid.active] * G))
    h = spec._nodal(grid)["h"]
    bound = weighted_norm(grid, h, spec.s) * weighted_norm(grid, t, spec.s_conjugate)
    if abs(value) > bound * (1.0 + 1e-10) + 1e-14:
        raise AssertionError(f"|G(u)| = {abs(value):.6g} exceeds Hoelder bound {bound:.6g}")
    return value, bound


def total_energy(u, spec):
    area, dirichlet, _, _ = _area(u)
    pot, _ = potential_energy(u, spec)
    t = u.values[u.grid.active]
    return EnergyBreakdown(
        area=area,
        potential=pot,
        total=area + pot,
        grad_l2=float(np.sqrt(dirichlet)),
        u_norm=weighted_norm(u.grid, t, spec.s_conjugate),
    )


def energy_change(u, d, alpha, spec):
    """I(u + alpha d) - I(u), evaluated termwise; ``inf`` if the step leaves the cone."""
    da, qmax = area_change(u, d, alpha)
    if not np.isfinite(da):
        return da, qmax
    grid = u.grid
    t0 = u.values[grid.active]
    t1 = t0 + alpha * d.values[grid.active]
    dg = float(np.sum(grid.node_vol[grid.active] * spec.nodal_G(grid, t0, t1)))
    return da + dg, qmax


def _full_gradient(u, spec):
    """dI/du at every node (pinned nodes included)."""
    grid = u.grid
    _, _, _, flux = _area(u, want_flux=True, strict=True)
    flux[grid.active] += grid.node_vol[grid.active] * spec.nodal_H(grid, u.values)
    return flux


def residual_gradient(u, spec):
    """Components dI/du_i at free nodes; zero at pinned and inactive nodes."""
    g = _full_gradient(u, spec)
    g[~u.grid.free] = 0.0
    return ScalarField(u.grid, g)


def first_variation(u, v, spec):
    """Directional derivative of the discrete energy at u along a test field v.

    ``v`` must vanish at every pinned node.
    """
    grid = u.grid
    vv = _vals(v)
    if np.any(vv[grid.pinned] != 0.0):
        raise ValueError("test field must vanish at pinned nodes")
    return float(np.dot(_full_gradient(u, spec), vv))


def frozen_energy(v, u_ref, spec):
    """Area energy of v plus the linear term with H frozen along u_ref."""
    grid = v.grid
    area = _area(v)[0]
    Hs = spec.nodal_H(grid, u_ref.values)
    return area + float(np.sum(grid.node_vol[grid.active] * Hs * v.values[grid.active]))


def coercivity_bound(u, spec, tol=1e-12):
    """(I(u), 0.5 ||grad u||^2 - ||h||_s ||u||_s'), asserting lhs >= rhs - tol."""
    e = total_energy(u, spec)
    h = spec._nodal(u.grid)["h"]
    rhs = 0.5 * e.grad_l2**2 - weighted_norm(u.grid, h, spec.s) * e.u_norm
    if e.total < rhs - tol:
        raise AssertionError(f"coercivity violated: {e.total!r} < {rhs!r}")
    return e.total, rhs


def assumption_audit(spec, grid, samples=1000, t_range=10.0, rng=None):
    """Spot-check n|H(x,t)| <= h(x) at random active nodes and values of t.

    Returns the largest observed excess ``n|H| - h`` (<= 0 when the audit passes).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    pts = grid.active_points
    k = rng.integers(0, pts.shape[0], size=samples)
    x = pts[k]
    t = rng.uniform(-t_range, t_range, size=samples)
    excess = spec.n * np.abs(spec.H(x, t)) - spec.envelope(x)
    return float(excess.max())
