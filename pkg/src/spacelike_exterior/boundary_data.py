"""Dirichlet data on the obstacle surfaces, the displacing test and feasible extensions."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .errors import ConfigInvalid, CutoffTooTight, NotLipschitzEnough
from .expressions import Expression
from .functional import ScalarField
from .geometry import kuhn_neighbor_offsets

# pair scans are chunked so the distance block stays around this many entries
_PAIR_BLOCK = 4_000_000


class BoundaryDatum:
    """Boundary values phi on the union of obstacle surfaces.

    Three representations are supported:

    * ``kind="constant"``: one value per obstacle (``values``).
    * ``kind="expression"``: one expression in ``x1..xn`` shared by all
      obstacles, or a list with one expression per obstacle.
    * ``kind="table"``: scattered ``points`` with ``values``; evaluation
      uses the nearest tabulated sample.
    """

    def __init__(self, kind, dimension, values=None, expression=None, points=None):
        self.kind = kind
        self.dimension = int(dimension)
        if kind == "constant":
            self.values = np.atleast_1d(np.asarray(values, dtype=float))
        elif kind == "expression":
            src = [expression] if isinstance(expression, str) else list(expression)
            self.expressions = [Expression(s, self.dimension) for s in src]
        elif kind == "table":
            self.points = np.atleast_2d(np.asarray(points, dtype=float))
            self.values = np.asarray(values, dtype=float).ravel()
            if self.points.shape != (self.values.size, self.dimension):
                raise ConfigInvalid("table points and values do not match", "boundary.table")
            self._tree = cKDTree(self.points)
        else:
            raise ConfigInvalid(f"unknown boundary kind {kind!r}", "boundary.kind")
        if kind != "expression" and not np.all(np.isfinite(self.values)):
            raise ConfigInvalid("boundary values must be finite", "boundary.values")

    @classmethod
    def constant(cls, values, dimension):
        return cls("constant", dimension, values=values)

    @classmethod
    def expression(cls, source, dimension):
        return cls("expression", dimension, expression=source)

    @classmethod
    def table(cls, points, values, dimension):
        return cls("table", dimension, values=values, points=points)

    def __call__(self, x, obstacle):
        """phi at surface points ``x`` belonging to obstacles ``obstacle``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        obstacle = np.broadcast_to(np.asarray(obstacle, dtype=int), x.shape[:1])
        if self.kind == "constant":
            vals = self.values if self.values.size > 1 else np.repeat(self.values, obstacle.max(initial=0) + 1)
            if obstacle.size and obstacle.max() >= vals.size:
                raise ConfigInvalid("fewer constant values than obstacles", "boundary.values")
            out = vals[obstacle]
        elif self.kind == "expression":
            if len(self.expressions) == 1:
                out = self.expressions[0](x)
            else:
                out = np.empty(x.shape[0])
                for i, ex in enumerate(self.expressions):
                    sel = obstacle == i
                    if np.any(sel):
                        out[sel] = ex(x[sel])
        else:
            _, j = self._tree.query(x)
            out = self.values[j]
        out = np.asarray(out, dtype=float)
        if not np.all(np.isfinite(out)):
            raise ConfigInvalid("boundary data not finite at some surface point", "boundary")
        return out

    def negated(self):
        out = object.__new__(BoundaryDatum)
        out.__dict__.update(self.__dict__)
        if self.kind == "expression":
            out.expressions = [Expression(f"-({e.source})", self.dimension) for e in self.expressions]
        else:
            out.values = -self.values
        return out

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "values": self.values.tolist()}
        if self.kind == "expression":
            src = [e.source for e in self.expressions]
            return {"kind": "expression", "expression": src[0] if len(src) == 1 else src}
        return {"kind": "table", "points": self.points.tolist(), "values": self.values.tolist()}


@dataclass
class BoundarySamples:
    points: np.ndarray
    obstacle: np.ndarray
    values: np.ndarray


def boundary_samples(phi, grid, samples=64, seed=0):
    """Pinned surface nodes plus ``samples`` random surface points per obstacle."""
    idx = grid.boundary_nodes
    pts = [grid.positions(idx)]
    obs = [grid.boundary_obstacle[grid.boundary_obstacle >= 0]]
    rng = np.random.default_rng(seed)
    for i, ob in enumerate(grid.obstacle_set.obstacles):
        if samples:
            pts.append(ob.surface_samples(samples, rng))
            obs.append(np.full(samples, i))
    pts = np.concatenate(pts)
    obs = np.concatenate(obs).astype(int)
    return BoundarySamples(pts, obs, phi(pts, obs))


def boundary_values(phi, grid):
    """phi at the pinned obstacle nodes (snapped positions)."""
    idx = grid.boundary_nodes
    return idx, phi(grid.positions(idx), grid.boundary_obstacle[grid.boundary_obstacle >= 0])


def _pair_blocks(m):
    step = max(1, _PAIR_BLOCK // max(m, 1))
    for a in range(0, m, step):
        yield a, min(m, a + step)


def _worst_ratio(smp, clear_only, obstacle_set, tiny=0.0):
    """Max |phi(x)-phi(y)|/|x-y| over sample pairs; returns (ratio, i, j, pairs)."""
    p, v = smp.points, smp.values
    m = p.shape[0]
    best, bi, bj, tested = 0.0, -1, -1, 0
    for a, b in _pair_blocks(m):
        d = np.linalg.norm(p[a:b, None, :] - p[None, :, :], axis=2)
        num = np.abs(v[a:b, None] - v[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            # several lattice nodes can snap to one surface point
            r = np.where(d > tiny, num / d, 0.0)
        rows = np.arange(a, b)
        r[np.arange(b - a), rows] = 0.0
        # only pairs i < j are needed
        r = np.where(rows[:, None] < np.arange(m)[None, :], r, 0.0)
        if clear_only:
            # segment tests only for the pairs that could matter
            cand = np.nonzero(r > best)
            if cand[0].size:
                order = np.argsort(-r[cand])
                ii, jj = cand[0][order], cand[1][order]
                chunk = 4096
                for s in range(0, ii.size, chunk):
                    sl = slice(s, s + chunk)
                    ok = obstacle_set.segments_clear(p[a + ii[sl]], p[jj[sl]])
                    if np.any(ok):
                        k = np.argmax(ok)
                        val = r[ii[sl][k], jj[sl][k]]
                        if val > best:
                            best, bi, bj = float(val), a + int(ii[sl][k]), int(jj[sl][k])
                        break
            tested += int(np.count_nonzero(r > 0))
        else:
            k = np.unravel_index(np.argmax(r), r.shape)
            if r[k] > best:
                best, bi, bj = float(r[k]), a + int(k[0]), int(k[1])
            tested += (b - a) * m
    return best, bi, bj, tested


@dataclass
class DisplacingVerdict:
    """Outcome of the sampled spacelike-displacing test."""

    verdict: str
    worst_ratio: float
    worst_pair: tuple = None
    margin: float = 0.0
    samples: int = 0
    note: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        pair = None if self.worst_pair is None else [np.asarray(p).tolist() for p in self.worst_pair]
        return {
            "verdict": self.verdict,
            "worst_ratio": self.worst_ratio,
            "worst_pair": pair,
            "margin": self.margin,
            "samples": self.samples,
            "note": self.note,
        }


def check_spacelike_displacing(phi, grid, margin=0.05, samples=64, seed=0):
    """Sampled test of |phi(x)-phi(y)| < |x-y| over pairs joined by a clear segment.

    Samples are all pinned surface nodes plus ``samples`` random points per
    obstacle.  A pass requires the worst ratio to be at most ``1 - margin``;
    a ratio of at least one fails, anything in between is marginal.
    """
    if not 0.0 <= margin < 1.0:
        raise ValueError("margin must lie in [0, 1)")
    smp = boundary_samples(phi, grid, samples, seed)
    if grid.obstacle_set.is_convex:
        # no hypothesis on the data when the obstacle is convex
        return DisplacingVerdict("pass", 0.0, None, margin, smp.points.shape[0],
                                 note="single convex obstacle: condition not required")
    ratio, i, j, tested = _worst_ratio(smp, True, grid.obstacle_set, 1e-9 * grid.h)
    if ratio >= 1.0:
        verdict = "fail"
    elif ratio <= 1.0 - margin:
        verdict = "pass"
    else:
        verdict = "marginal"
    pair = None if i < 0 else (smp.points[i], smp.points[j])
    return DisplacingVerdict(verdict, ratio, pair, margin, smp.points.shape[0],
                             extra={"pairs_tested": tested})


def boundary_lipschitz_constant(phi, grid, samples=64, seed=0):
    """Largest chord difference quotient over all sampled surface pairs."""
    smp = boundary_samples(phi, grid, samples, seed)
    return _worst_ratio(smp, False, None, 1e-9 * grid.h)[0]


# --------------------------------------------------------------------------
# extension


def cutoff_profile(r, R_cut, steepness=1.0):
    """Radial ramp: 0 on r >= 2 R_cut, slope -steepness/R_cut inward, capped at 1.

    With ``steepness <= 1`` the ramp equals 1 on r <= (2 - 1/steepness) R_cut.
    """
    return np.clip(steepness * (2.0 - np.asarray(r, dtype=float) / R_cut), 0.0, 1.0)


def calibrated_steepness(grid, R_cut, rounds=6):
    """Ramp steepness whose nodal interpolant keeps simplex slopes <= 1/R_cut.

    Interpolating the convex |x| overshoots its slope by O(h/r).  Clipping
    only shrinks the differences along simplex edges, so the interpolated
    slope scales with the steepness on the unclipped part; a few fixed-point
    rounds absorb the shift of that part towards the origin.
    """
    pts = grid.active_points
    r = np.linalg.norm(pts, axis=1)
    s = 1.0
    for _ in range(rounds):
        v = ScalarField.zeros(grid)
        v.values[grid.active] = cutoff_profile(r, R_cut, s)
        v.values[grid.pinned] = 1.0
        v.values[grid.farfield_nodes] = 0.0
        ratio = v.max_gradient() * R_cut
        if ratio <= 1.0:
            break
        s *= (1.0 - 1e-9) / ratio
    return s


def default_cutoff_radius(phi_sup, eps, extent):
    """Smallest R with R >= 2*extent and phi_sup/R < eps/2."""
    return max(2.0 * extent, 2.0 * phi_sup / eps * (1.0 + 1e-9), 1e-12)


@dataclass
class Extension:
    field: ScalarField
    R_cut: float
    eps: float
    lipschitz: float
    bound: float


def mcshane(points, sample_pts, sample_vals, slope, lo, hi):
    """min_y [phi(y) + slope*|x-y|] clamped to [lo, hi]."""
    out = np.full(points.shape[0], hi, dtype=float)
    if points.shape[0] == 0:
        return out
    # every cone exceeds hi once slope*dist(x, samples) >= hi - min(phi)
    dist, _ = cKDTree(sample_pts).query(points)
    todo = np.flatnonzero(sample_vals.min() + slope * dist < hi)
    out[todo] = _kernels.inf_convolution(points[todo], sample_pts, sample_vals, slope)
    return np.clip(out, lo, hi)


def lipschitz_extension(points, sample_pts, sample_vals, slope, lo, hi):
    """Mean of the McShane (inf) and Whitney (sup) extensions, clamped to [lo, hi].

    Both one-sided extensions interpolate the samples with slope ``slope``;
    their mean keeps both properties and is odd: the extension of -phi is
    minus the extension of phi.
    """
    below = mcshane(points, sample_pts, sample_vals, slope, lo, hi)
    above = -mcshane(points, sample_pts, -sample_vals, slope, -hi, -lo)
    return 0.5 * (below + above)


def extend_to_feasible(phi, grid, eps, R_cut=None, samples=64, seed=0, details=False):
    """Feasible field equal to phi on the obstacles and zero far away.

    The field is ``v * psi`` with ``psi`` the range-clamped extension of the
    pinned boundary values with slope ``1 - eps`` (:func:`lipschitz_extension`)
    and ``v`` the radial ramp of :func:`cutoff_profile`.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    L = boundary_lipschitz_constant(phi, grid, samples, seed)
    if L > (1.0 - eps) * (1.0 + 1e-12):
        raise NotLipschitzEnough(f"boundary data has Lipschitz estimate {L:.6g} > 1 - eps = {1 - eps:.6g}")
    idx, vals = boundary_values(phi, grid)
    sup = float(np.max(np.abs(vals), initial=0.0))
    extent = grid.obstacle_set.extent
    if R_cut is None:
        R_cut = default_cutoff_radius(sup, eps, extent)
    if R_cut > grid.R_far / 2.0:
        raise CutoffTooTight(
            f"cutoff radius {R_cut:.6g} exceeds R_far/2 = {grid.R_far / 2:.6g}; enlarge R_far or eps"
        )
    w = ScalarField.zeros(grid)
    constant = np.ptp(vals) == 0
    if sup > 0:
        pts = grid.active_points
        r = np.linalg.norm(pts, axis=1)
        near = r < 2.0 * R_cut
        nodes = grid.active[near]
        psi = lipschitz_extension(pts[near], grid.positions(idx), vals, 1.0 - eps, vals.min(), vals.max())
        # for constant data the ramp alone must meet c/R_cut, with no slack to spare
        steep = calibrated_steepness(grid, R_cut) if constant else 1.0
        w.values[nodes] = cutoff_profile(r[near], R_cut, steep) * psi
        w.values[idx] = vals
    w.values[grid.farfield_nodes] = 0.0
    # psi is constant when phi is, and then only the ramp contributes
    bound = sup / R_cut + (0.0 if constant else 1.0 - eps)
    if sup > 0:
        # nodal interpolation of a Lipschitz field can exceed its slope on
        # distorted snapped simplices and across kinks; repair locally
        inside = grid.active[np.linalg.norm(grid.active_points, axis=1) < 2.0 * R_cut]
        limit_gradients(w, bound * (1.0 - 1e-9), min(vals.min(), 0.0), max(vals.max(), 0.0), inside)
    if details:
        return Extension(w, R_cut, eps, L, bound)
    return w


def _violating_nodes(u, bound2):
    grid = u.grid
    offs, _ = grid.perm_tables
    flag = np.zeros(grid.num_nodes, dtype=bool)
    _kernels.regular_violators(u.values, grid.cube_base, grid.cube_bits, offs, grid.h, bound2, flag)
    verts = grid.irr_verts
    if verts.size:
        gi = np.einsum("mij,mj->mi", grid.irr_inv, u.values[verts[:, 1:]] - u.values[verts[:, :1]])
        bad = np.einsum("mi,mi->m", gi, gi) > bound2
        flag[verts[bad].ravel()] = True
    return flag


def limit_gradients(u, bound, lo, hi, nodes=None, max_sweeps=500):
    """Lower simplex gradients above ``bound`` by moving free nodal values in place.

    Only nodes listed in ``nodes`` (default: all free nodes) are moved and
    values stay in ``[lo, hi]``.  Each node is projected onto the interval of
    values keeping its whole simplex star under the bound, so the largest
    gradient never increases.  Returns the largest remaining |grad u|.
    """
    grid = u.grid
    offs, _ = grid.perm_tables
    ptr, simp, local = grid.irregular_star
    movable = grid.free.copy()
    if nodes is not None:
        keep = np.zeros(grid.num_nodes, dtype=bool)
        keep[nodes] = True
        movable &= keep
    bound2 = bound * bound
    # project a little inside the bound so rounding cannot re-flag a node
    target2 = (bound * (1.0 - 1e-7)) ** 2
    inv = grid.irr_inv if grid.irr_inv.size else np.zeros((0, grid.n, grid.n))
    verts = grid.irr_verts if grid.irr_verts.size else np.zeros((0, grid.n + 1), dtype=np.int64)
    strides = np.asarray(grid.strides)
    neigh = np.array([np.dot(o, strides) for o in kuhn_neighbor_offsets(grid.n)], dtype=np.int64)
    for _ in range(3):
        todo = np.flatnonzero(_violating_nodes(u, bound2) & movable)
        if todo.size == 0:
            break
        # only the stars of moved nodes can change, so iterate on that front
        for _ in range(max_sweeps):
            before = u.values[todo].copy()
            _kernels.limit_node_gradients(
                u.values, todo, target2, lo, hi, grid.cube_of_base, grid.cube_bits, offs, grid.h,
                ptr, simp, local, verts, inv,
            )
            moved = todo[u.values[todo] != before]
            if moved.size == 0:
                break
            near = np.unique((moved[:, None] + neigh[None, :]).ravel())
            near = near[(near >= 0) & (near < grid.num_nodes)]
            todo = near[movable[near]]
    return u.max_gradient()
