"""Radially symmetric maximal graphs outside a centred ball.

With H = 0 and u = u(r) the equation has the first integral

    r^(n-1) u'(r) / sqrt(1 - u'(r)^2) = -a,

so u'(r) = -a / sqrt(r^(2(n-1)) + a^2) and

    u(r) = int_r^R a / sqrt(s^(2(n-1)) + a^2) ds,

with R = infinity for the exterior problem or R = R_outer for the problem
truncated by u(R_outer) = 0.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .errors import GeometryMismatch, QuadratureFailure, Unattainable
from .functional import ScalarField
from .geometry import Ball

TOL = 1e-13
TAIL_FACTOR = 1e4


def slope(r, n, a):
    """u'(r) in closed form."""
    r = np.asarray(r, dtype=float)
    return -a / np.sqrt(r ** (2 * (n - 1)) + a * a)


def _integrand(s, n, a):
    return a / np.sqrt(s ** (2 * (n - 1)) + a * a)


def tail_start(n, a):
    return TAIL_FACTOR * max(1.0, abs(a) ** (1.0 / (n - 1)))


def _tail(n, a):
    """int_S^inf a / s^(n-1) ds and the bound on the replacement error."""
    S = tail_start(n, a)
    value = a * S ** (2 - n) / (n - 2)
    # a/s^(n-1) - a/sqrt(s^(2n-2) + a^2) <= a^3 / (2 s^(3n-3))
    bound = abs(a) ** 3 * S ** (4 - 3 * n) / (2.0 * (3 * n - 4))
    return value, bound


def _quad(n, a, lo, hi):
    if hi <= lo:
        return 0.0
    # geometric breakpoints keep each panel well scaled
    pts = np.geomspace(lo, hi, max(2, int(np.ceil(np.log(hi / lo) / np.log(4.0))) + 1))
    total = 0.0
    for x0, x1 in zip(pts[:-1], pts[1:]):
        val, err, *rest = integrate.quad(_integrand, x0, x1, args=(n, a), epsabs=TOL * 1e-2,
                                         epsrel=TOL, limit=200, full_output=1)
        if len(rest) > 1 and err > 1e-11 * max(1.0, abs(val)):
            raise QuadratureFailure(f"quadrature on [{x0:g}, {x1:g}] did not converge: {rest[1]}")
        total += val
    return total


def profile_value(n, a, r, R_outer=None):
    """u(r) by adaptive quadrature (no tabulation)."""
    if a == 0.0:
        return 0.0
    if R_outer is not None:
        return _quad(n, a, r, R_outer) if r < R_outer else -_quad(n, a, R_outer, r)
    S = tail_start(n, a)
    tail, _ = _tail(n, a)
    if r >= S:
        return a * r ** (2 - n) / (n - 2)
    return _quad(n, a, r, S) + tail


@dataclass
class RadialProfile:
    """Tabulated radial solution; evaluation is cubic Hermite with exact slopes."""

    n: int
    a: float
    r0: float
    r: np.ndarray
    u: np.ndarray
    R_outer: float = None

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.r, self.u, slope(self.r, self.n, self.a))

    @property
    def r_max(self):
        return float(self.r[-1])

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.r0 * (1 - 1e-12)) or np.any(r > self.r_max * (1 + 1e-12)):
            raise ValueError("radius outside the tabulated range")
        return self._spline(np.clip(r, self.r0, self.r_max))

    def derivative(self, r):
        return slope(r, self.n, self.a)

    @property
    def max_slope(self):
        return float(abs(self.a) / np.sqrt(self.r0 ** (2 * (self.n - 1)) + self.a**2))

    @property
    def margin(self):
        return 1.0 - self.max_slope

    def first_integral(self, r):
        """r^(n-1) u' / sqrt(1 - u'^2) from the closed-form slope (equals -a)."""
        d = self.derivative(r)
        return np.asarray(r) ** (self.n - 1) * d / np.sqrt(1.0 - d * d)

    def table(self):
        return np.column_stack([self.r, self.u])


def radial_profile(n, a, r0, r_max, R_outer=None, ratio=1.0005):
    """Tabulate u on geometrically spaced radii in [r0, r_max].

    The panels are integrated with adaptive vector quadrature and summed from
    the outer end, where either the analytic far tail (exterior problem) or
    u(R_outer) = 0 (truncated problem) closes the sum.
    """
    if n < 3:
        raise ValueError("dimension must be at least 3")
    if r0 <= 0 or r_max <= r0:
        raise ValueError("need 0 < r0 < r_max")
    if R_outer is not None and R_outer < r_max:
        raise ValueError("r_max must not exceed R_outer")
    m = max(2, int(np.ceil(np.log(r_max / r0) / np.log(ratio))) + 1)
    r = np.geomspace(r0, r_max, m)
    r[0], r[-1] = r0, r_max
    if a == 0.0:
        return RadialProfile(n, 0.0, r0, r, np.zeros(m), R_outer)
    lo, width = r[:-1], np.diff(r)
    panels, err = integrate.quad_vec(
        lambda t: _integrand(lo + t * width, n, a) * width, 0.0, 1.0, epsabs=1e-15, epsrel=TOL
    )
    if err > 1e-11:
        raise QuadratureFailure(f"panel quadrature error estimate {err:.3g}")
    outer = profile_value(n, a, r_max, R_outer)
    u = np.empty(m)
    u[-1] = outer
    u[:-1] = outer + np.cumsum(panels[::-1])[::-1]
    return RadialProfile(n, float(a), float(r0), r, u, R_outer)


def attainable_limit(n, r0, R_outer=None):
    """Supremum of |u_a(r0)| over a (infinite for the exterior problem)."""
    return np.inf if R_outer is None else R_outer - r0


def match_boundary_value(n, r0, c, R_outer=None, tol=1e-10):
    """Flux constant a with u_a(r0) = c, by bisection on the increasing map a -> u_a(r0)."""
    c = float(c)
    if not np.isfinite(c):
        raise Unattainable("boundary value must be finite")
    if c == 0.0:
        return 0.0
    if abs(c) >= attainable_limit(n, r0, R_outer):
        raise Unattainable(f"|c| = {abs(c):g} is not attainable (limit {attainable_limit(n, r0, R_outer):g})")
    target = abs(c)
    hi = 1.0
    while profile_value(n, hi, r0, R_outer) < target:
        hi *= 2.0
        if hi > 1e12:
            raise Unattainable(f"no flux constant reaches u(r0) = {c:g}")
    a = optimize.bisect(lambda x: profile_value(n, x, r0, R_outer) - target, 0.0, hi,
                        xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(profile_value(n, a, r0, R_outer) - target) > tol:
        raise Unattainable(f"bisection stalled at a = {a!r}")
    return a if c > 0 else -a


def sample_on_grid(profile, grid):
    """Nodal field u(|x|) on a grid around the matching centred ball."""
    obs = grid.obstacle_set.obstacles
    if len(obs) != 1 or not isinstance(obs[0], Ball):
        raise GeometryMismatch("radial oracle needs a single ball obstacle")
    ball = obs[0]
    if np.linalg.norm(ball.center) > 1e-12 or abs(ball.radius - profile.r0) > 1e-12 * profile.r0:
        raise GeometryMismatch("ball must be centred at the origin with the profile's inner radius")
    if profile.r_max < grid.R_far * (1 - 1e-12):
        raise GeometryMismatch("profile table does not reach R_far")
    pts = grid.active_points
    vals = np.zeros(grid.num_nodes)
    rr = np.clip(np.linalg.norm(pts, axis=1), profile.r0, profile.r_max)
    vals[grid.active] = profile(rr)
    return ScalarField(grid, vals)
