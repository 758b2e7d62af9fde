"""Exterior domains, their truncated Cartesian grids and visibility queries.

The computational domain is ``{x : |x| < R_far} \\ closure(obstacles)``.  It is
covered by a uniform node lattice; every lattice cube is split into ``n!``
simplices (Kuhn subdivision) carrying piecewise linear fields.  Nodes of the
solid region that touch the domain, and domain nodes lying very close to a
surface, are *snapped* onto the analytic surface and become pinned nodes:
``boundary`` on obstacle surfaces, ``farfield`` on the truncation sphere.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import (
    GapUnresolved,
    NotNearBoundary,
    ObstaclesOverlap,
    TruncationTooTight,
)

OBSTACLE, BOUNDARY, INTERIOR, FARFIELD, OUTSIDE = range(5)
TAG_NAMES = ("obstacle", "boundary", "interior", "farfield", "outside")

# domain nodes closer than SNAP_FRACTION * h to a surface are snapped onto it
SNAP_FRACTION = 0.35
# snapped simplices thinner than this (relative to h^n / n!) are dropped
MIN_RELATIVE_VOLUME = 1e-8
# snapped simplices on which the interpolated distance to the boundary is
# steeper than this are slivers and keep their lattice shape (see _sliver_mask)
SLIVER_SLOPE = 1.05


class Ball:
    """Closed Euclidean ball."""

    kind = "ball"

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    @property
    def dimension(self):
        return self.center.size

    @property
    def extent(self):
        """Largest distance from the origin to a point of the ball."""
        return float(np.linalg.norm(self.center) + self.radius)

    def signed_distance(self, x):
        x = np.atleast_2d(x)
        return np.linalg.norm(x - self.center, axis=1) - self.radius

    def signed_distance_grid(self, axes):
        d2 = 0.0
        for k, ax in enumerate(axes):
            shape = [1] * len(axes)
            shape[k] = ax.size
            d2 = d2 + ((ax - self.center[k]) ** 2).reshape(shape)
        return np.sqrt(d2) - self.radius

    def project(self, x):
        x = np.atleast_2d(x)
        d = x - self.center
        norm = np.linalg.norm(d, axis=1, keepdims=True)
        # the centre itself projects along the first axis
        d = np.where(norm > 0, d, np.eye(self.dimension)[0])
        norm = np.where(norm > 0, norm, 1.0)
        return self.center + self.radius * d / norm

    def segment_hits(self, x, y, eta=1e-9):
        """True where some inner point of segment x->y lies in the closed ball."""
        p = x - self.center
        d = y - x
        dd = np.einsum("ij,ij->i", d, d)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = -np.einsum("ij,ij->i", p, d) / dd
        t = np.clip(np.nan_to_num(t, nan=0.5), eta, 1.0 - eta)
        q = p + t[:, None] * d
        return np.einsum("ij,ij->i", q, q) <= self.radius**2

    def surface_samples(self, count, rng):
        g = rng.standard_normal((count, self.dimension))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return self.center + self.radius * g

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


class Box:
    """Closed axis-aligned box ``[lo, hi]``."""

    kind = "box"

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("box needs lo < hi componentwise")

    @property
    def dimension(self):
        return self.lo.size

    @property
    def extent(self):
        corner = np.maximum(np.abs(self.lo), np.abs(self.hi))
        return float(np.linalg.norm(corner))

    def signed_distance(self, x):
        x = np.atleast_2d(x)
        q = np.maximum(self.lo - x, x - self.hi)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        return outside + np.minimum(q.max(axis=1), 0.0)

    def signed_distance_grid(self, axes):
        n = len(axes)
        out2 = 0.0
        inner = -np.inf
        for k, ax in enumerate(axes):
            shape = [1] * n
            shape[k] = ax.size
            q = np.maximum(self.lo[k] - ax, ax - self.hi[k]).reshape(shape)
            out2 = out2 + np.maximum(q, 0.0) ** 2
            inner = np.maximum(inner, q)
        return np.sqrt(out2) + np.minimum(inner, 0.0)

    def project(self, x):
        x = np.atleast_2d(x).astype(float)
        q = np.maximum(self.lo - x, x - self.hi)
        out = np.clip(x, self.lo, self.hi)
        inside = q.max(axis=1) <= 0
        if np.any(inside):
            xi = x[inside]
            gaps = np.concatenate([xi - self.lo, self.hi - xi], axis=1)
            j = gaps.argmin(axis=1)
            axis = j % self.dimension
            rows = np.arange(xi.shape[0])
            proj = xi.copy()
            proj[rows, axis] = np.where(j < self.dimension, self.lo[axis], self.hi[axis])
            out[inside] = proj
        return out

    def segment_hits(self, x, y, eta=1e-9):
        d = y - x
        tmin = np.full(x.shape[0], eta)
        tmax = np.full(x.shape[0], 1.0 - eta)
        for k in range(self.dimension):
            dk = d[:, k]
            flat = dk == 0
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (self.lo[k] - x[:, k]) / dk
                t2 = (self.hi[k] - x[:, k]) / dk
            lo_t = np.where(flat, -np.inf, np.minimum(t1, t2))
            hi_t = np.where(flat, np.inf, np.maximum(t1, t2))
            miss = flat & ((x[:, k] < self.lo[k]) | (x[:, k] > self.hi[k]))
            tmin = np.maximum(tmin, lo_t)
            tmax = np.where(miss, -np.inf, np.minimum(tmax, hi_t))
        return tmin <= tmax

    def surface_samples(self, count, rng):
        n = self.dimension
        side = self.hi - self.lo
        areas = np.array([np.prod(np.delete(side, k)) for k in range(n)] * 2)
        faces = rng.choice(2 * n, size=count, p=areas / areas.sum())
        pts = self.lo + rng.random((count, n)) * side
        axis = faces % n
        rows = np.arange(count)
        pts[rows, axis] = np.where(faces < n, self.lo[axis], self.hi[axis])
        return pts

    def to_dict(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


def shape_distance(a, b):
    """Euclidean distance between two closed shapes (0 if they meet)."""
    if isinstance(a, Ball) and isinstance(b, Ball):
        return max(0.0, float(np.linalg.norm(a.center - b.center)) - a.radius - b.radius)
    if isinstance(a, Box) and isinstance(b, Box):
        gap = np.maximum(np.maximum(b.lo - a.hi, a.lo - b.hi), 0.0)
        return float(np.linalg.norm(gap))
    ball, box = (a, b) if isinstance(a, Ball) else (b, a)
    return max(0.0, float(box.signed_distance(ball.center)[0]) - ball.radius)


def obstacle_from_dict(spec, dimension):
    kind = spec.get("type")
    if kind == "ball":
        shape = Ball(spec["center"], spec["radius"])
    elif kind == "box":
        shape = Box(spec["lo"], spec["hi"])
    else:
        raise ValueError(f"unknown obstacle type {kind!r}")
    if shape.dimension != dimension:
        raise ValueError("obstacle dimension does not match domain dimension")
    return shape


@dataclass
class ObstacleSet:
    """Finitely many disjoint closed obstacles in R^n, n >= 3."""

    obstacles: list
    dimension: int

    def __post_init__(self):
        if self.dimension < 3:
            raise ValueError("dimension must be at least 3")
        if not self.obstacles:
            raise ValueError("at least one obstacle is required")
        for ob in self.obstacles:
            if ob.dimension != self.dimension:
                raise ValueError("obstacle dimension mismatch")
        for i, j in itertools.combinations(range(len(self.obstacles)), 2):
            if shape_distance(self.obstacles[i], self.obstacles[j]) <= 0:
                raise ObstaclesOverlap(f"obstacles {i} and {j} have intersecting closures")

    def __len__(self):
        return len(self.obstacles)

    @property
    def extent(self):
        return max(ob.extent for ob in self.obstacles)

    @property
    def min_gap(self):
        if len(self.obstacles) < 2:
            return math.inf
        return min(
            shape_distance(a, b) for a, b in itertools.combinations(self.obstacles, 2)
        )

    @property
    def is_convex(self):
        # balls and boxes are convex; a union of two or more disjoint ones is not
        return len(self.obstacles) == 1

    def signed_distances(self, x):
        """Array of shape (m, len(obstacles))."""
        x = np.atleast_2d(x)
        return np.stack([ob.signed_distance(x) for ob in self.obstacles], axis=1)

    def signed_distance(self, x):
        return self.signed_distances(x).min(axis=1)

    def nearest(self, x):
        """Index of the obstacle whose surface is nearest to each point."""
        return np.abs(self.signed_distances(x)).argmin(axis=1)

    def project(self, x):
        x = np.atleast_2d(x)
        idx = self.nearest(x)
        out = np.empty_like(x, dtype=float)
        for i, ob in enumerate(self.obstacles):
            sel = idx == i
            if np.any(sel):
                out[sel] = ob.project(x[sel])
        return out, idx

    def segments_clear(self, x, y):
        """Vectorised visibility: no inner point of x->y meets a closed obstacle."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        hit = np.zeros(x.shape[0], dtype=bool)
        for ob in self.obstacles:
            hit |= ob.segment_hits(x, y)
        same = np.all(x == y, axis=1)
        return ~hit | same

    def to_dict(self):
        return {"dimension": self.dimension, "obstacles": [ob.to_dict() for ob in self.obstacles]}


def kuhn_simplices(n):
    """Permutations and vertex offsets of the n! Kuhn simplices of the unit cube."""
    out = []
    for perm in itertools.permutations(range(n)):
        off = [0] * n
        verts = [tuple(off)]
        for a in perm:
            off[a] += 1
            verts.append(tuple(off))
        out.append((perm, verts))
    return out


def kuhn_neighbor_offsets(n):
    """Offsets of lattice nodes sharing a Kuhn simplex with the origin."""
    ups = [o for o in itertools.product((0, 1), repeat=n) if any(o)]
    return ups + [tuple(-c for c in o) for o in ups]


def _shift(mask, offset):
    """out[i] = mask[i + offset], False outside the array."""
    out = np.zeros_like(mask)
    src, dst = [], []
    for o, size in zip(offset, mask.shape):
        src.append(slice(max(o, 0), size + min(o, 0)))
        dst.append(slice(max(-o, 0), size + min(-o, 0)))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def permutation_parity(perm):
    sign = 1
    p = list(perm)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@dataclass(eq=False)
class ExteriorGrid:
    """Truncated, classified lattice over the exterior domain.

    Node data are flat arrays in C order over ``shape``.  Regular simplices
    (no snapped vertex) are stored per cube as a base node plus a bitmask of
    Kuhn permutations; simplices with a snapped vertex are stored explicitly
    with their inverse edge matrices.
    """

    obstacle_set: ObstacleSet
    R_far: float
    h: float
    shape: tuple
    origin: float
    tags: np.ndarray
    pinned: np.ndarray  # sorted flat indices of snapped nodes
    pinned_pos: np.ndarray  # (p, n) snapped positions
    boundary_obstacle: np.ndarray  # (p,) obstacle index, -1 for farfield nodes
    cube_base: np.ndarray  # flat base node of every cube with a regular simplex
    cube_bits: np.ndarray  # bitmask of regular Kuhn permutations per cube
    irr_verts: np.ndarray  # (m, n+1)
    irr_inv: np.ndarray  # (m, n, n)
    irr_vol: np.ndarray  # (m,)
    irr_cell: np.ndarray  # (m,) flat cube index
    node_vol: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.obstacle_set.dimension

    @property
    def num_nodes(self):
        return int(np.prod(self.shape))

    @property
    def cell_shape(self):
        return tuple(s - 1 for s in self.shape)

    @cached_property
    def simplex_volume(self):
        return self.h**self.n / math.factorial(self.n)

    @cached_property
    def kuhn(self):
        return kuhn_simplices(self.n)

    @cached_property
    def strides(self):
        return tuple(int(np.prod(self.shape[k + 1:])) for k in range(self.n))

    @cached_property
    def perm_tables(self):
        from ._kernels import permutation_tables

        return permutation_tables(self.kuhn, self.strides)

    @cached_property
    def axes(self):
        return [self.origin + self.h * np.arange(s) for s in self.shape]

    @cached_property
    def cube_of_base(self):
        """Map from flat node index to its position in ``cube_base`` (or -1)."""
        out = np.full(self.num_nodes, -1, dtype=np.int64)
        out[self.cube_base] = np.arange(self.cube_base.size)
        return out

    @cached_property
    def irregular_star(self):
        """CSR adjacency node -> (irregular simplex, local vertex index)."""
        k = self.irr_verts.shape[1] if self.irr_verts.size else self.n + 1
        flat = self.irr_verts.ravel()
        order = np.argsort(flat, kind="stable")
        ptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(flat, minlength=self.num_nodes), out=ptr[1:])
        return ptr, (order // k).astype(np.int64), (order % k).astype(np.int64)

    @cached_property
    def free(self):
        return (self.tags.ravel() == INTERIOR) & (self.node_vol > 0)

    @cached_property
    def pinned_mask(self):
        m = np.zeros(self.num_nodes, dtype=bool)
        m[self.pinned] = True
        return m

    @cached_property
    def active(self):
        """Flat indices of nodes carrying quadrature weight."""
        return np.flatnonzero(self.node_vol > 0)

    @cached_property
    def boundary_nodes(self):
        """Pinned nodes lying on obstacle surfaces (flat indices)."""
        return self.pinned[self.boundary_obstacle >= 0]

    @cached_property
    def farfield_nodes(self):
        return self.pinned[self.boundary_obstacle < 0]

    def lattice_points(self, idx):
        """Unsnapped lattice coordinates of flat node indices."""
        multi = np.unravel_index(np.asarray(idx), self.shape)
        return self.origin + self.h * np.stack(multi, axis=-1).astype(float)

    def positions(self, idx):
        """Node coordinates, honouring snapping."""
        idx = np.asarray(idx)
        pts = self.lattice_points(idx)
        loc = np.searchsorted(self.pinned, idx)
        loc = np.minimum(loc, max(self.pinned.size - 1, 0))
        hit = self.pinned.size > 0
        if hit:
            snapped = self.pinned[loc] == idx
            pts[snapped] = self.pinned_pos[loc[snapped]]
        return pts

    @cached_property
    def active_points(self):
        return self.positions(self.active)

    def cell_slices(self, offset):
        return tuple(slice(o, s - 1 + o) for o, s in zip(offset, self.shape))

    def tag_counts(self):
        counts = np.bincount(self.tags.ravel(), minlength=5)
        return {name: int(c) for name, c in zip(TAG_NAMES, counts)}

    def summary(self):
        out = {
            "dimension": self.n,
            "R_far": self.R_far,
            "h_grid": self.h,
            "shape": list(self.shape),
            "tags": self.tag_counts(),
        }
        out.update(self.stats)
        return out


def build_grid(obstacle_set, R_far, h_grid):
    """Classify a lattice of spacing ``h_grid`` covering the ball of radius ``R_far``.

    Raises
    ------
    TruncationTooTight
        if some obstacle leaves the ball of radius ``R_far / 2``.
    GapUnresolved
        if two obstacles are closer than ``3 * h_grid``.
    """
    n = obstacle_set.dimension
    R_far = float(R_far)
    h = float(h_grid)
    if h <= 0:
        raise ValueError("h_grid must be positive")
    if not R_far > 2.0 * obstacle_set.extent:
        raise TruncationTooTight(
            f"R_far={R_far} must exceed twice the obstacle extent {obstacle_set.extent:.6g}"
        )
    gap = obstacle_set.min_gap
    if gap < 3.0 * h:
        raise GapUnresolved(f"obstacle gap {gap:.6g} is below 3*h_grid = {3 * h:.6g}")

    half = int(math.ceil(R_far / h)) + 1
    N = 2 * half + 1
    shape = (N,) * n
    origin = -half * h
    axes = [origin + h * np.arange(N)] * n

    d_obs = None
    for ob in obstacle_set.obstacles:
        d = ob.signed_distance_grid(axes)
        d_obs = d if d_obs is None else np.minimum(d_obs, d)
    d_obs = np.broadcast_to(d_obs, shape)
    r2 = 0.0
    for k in range(n):
        s = [1] * n
        s[k] = N
        r2 = r2 + (axes[k] ** 2).reshape(s)
    d_far = R_far - np.sqrt(r2)
    d_far = np.broadcast_to(d_far, shape)

    domain = (d_obs > 0) & (d_far > 0)
    solid = ~domain
    touching = np.zeros(shape, dtype=bool)
    for off in kuhn_neighbor_offsets(n):
        touching |= _shift(domain, off)
    near = domain & (np.minimum(d_obs, d_far) <= SNAP_FRACTION * h)
    snapped = (solid & touching) | near
    del touching, near

    tags = np.full(shape, INTERIOR, dtype=np.int8)
    tags[solid & (d_obs <= 0)] = OBSTACLE
    tags[solid & (d_obs > 0)] = OUTSIDE
    far_side = np.abs(d_far) < np.abs(d_obs)
    tags[snapped & far_side] = FARFIELD
    tags[snapped & ~far_side] = BOUNDARY
    del far_side

    pinned = np.flatnonzero(snapped)
    grid_pts = origin + h * np.stack(np.unravel_index(pinned, shape), axis=-1).astype(float)
    is_far = tags.ravel()[pinned] == FARFIELD
    pinned_pos = np.empty_like(grid_pts)
    bobs = np.full(pinned.size, -1, dtype=np.int64)
    if np.any(~is_far):
        proj, idx = obstacle_set.project(grid_pts[~is_far])
        pinned_pos[~is_far] = proj
        bobs[~is_far] = idx
    if np.any(is_far):
        p = grid_pts[is_far]
        pinned_pos[is_far] = R_far * p / np.linalg.norm(p, axis=1, keepdims=True)

    usable = domain | snapped
    vol0 = h**n / math.factorial(n)
    node_vol = np.zeros(shape)
    if n > 4:
        raise ValueError("lattice kernels support dimensions 3 and 4")
    cube_bits = np.zeros((N - 1,) * n, dtype=np.uint64)
    irr_cells, irr_perm = [], []
    kuhn = kuhn_simplices(n)
    cells_total = 0
    all_pinned_dropped = 0
    for p_index, (perm, verts) in enumerate(kuhn):
        sl = [tuple(slice(o, N - 1 + o) for o in v) for v in verts]
        act = np.ones((N - 1,) * n, dtype=bool)
        any_snap = np.zeros_like(act)
        all_snap = np.ones_like(act)
        for s in sl:
            act &= usable[s]
            any_snap |= snapped[s]
            all_snap &= snapped[s]
        all_pinned_dropped += int(np.count_nonzero(act & all_snap))
        act &= ~all_snap
        regular = act & ~any_snap
        irregular = act & any_snap
        cube_bits |= regular.astype(np.uint64) << np.uint64(p_index)
        cells_total += int(np.count_nonzero(act))
        for s in sl:
            node_vol[s] += regular * (vol0 / (n + 1))
        cidx = np.flatnonzero(irregular)
        irr_cells.append(cidx)
        irr_perm.append(np.full(cidx.size, p_index))
    del domain, solid, act, any_snap, all_snap, regular, irregular
    cubes = np.flatnonzero(cube_bits)
    cube_base = np.ravel_multi_index(np.unravel_index(cubes, (N - 1,) * n), shape)
    cube_bits = cube_bits.ravel()[cubes]

    irr_cells = np.concatenate(irr_cells)
    irr_perm = np.concatenate(irr_perm)
    base = np.stack(np.unravel_index(irr_cells, (N - 1,) * n), axis=-1)
    offsets = np.array([verts for _, verts in kuhn])  # (n!, n+1, n)
    vmulti = base[:, None, :] + offsets[irr_perm]
    verts_flat = np.ravel_multi_index(tuple(np.moveaxis(vmulti, -1, 0)), shape)

    pos = origin + h * vmulti.astype(float)
    loc = np.searchsorted(pinned, verts_flat)
    loc = np.minimum(loc, pinned.size - 1)
    is_snapped = pinned[loc] == verts_flat
    pos[is_snapped] = pinned_pos[loc[is_snapped]]
    edges = pos[:, 1:, :] - pos[:, :1, :]
    parity = np.array([permutation_parity(perm) for perm, _ in kuhn])[irr_perm]
    vol = parity * np.linalg.det(edges) / math.factorial(n)
    keep = vol > MIN_RELATIVE_VOLUME * vol0
    dropped = int(np.count_nonzero(~keep))
    verts_flat, edges, vol, irr_cells = verts_flat[keep], edges[keep], vol[keep], irr_cells[keep]
    inv = np.linalg.inv(edges) if vol.size else np.zeros((0, n, n))
    node_vol = node_vol.ravel()
    sliver = _sliver_mask(obstacle_set, R_far, pos[keep], inv)
    slivers = int(np.count_nonzero(sliver))
    if slivers:
        # give slivers their unsnapped lattice shape
        lat = h * vmulti[keep][sliver].astype(float)
        inv[sliver] = np.linalg.inv(lat[:, 1:, :] - lat[:, :1, :])
        vol[sliver] = vol0
    np.add.at(node_vol, verts_flat.ravel(), np.repeat(vol / (n + 1), n + 1))

    tags_flat = tags.ravel()
    free = (tags_flat == INTERIOR) & (node_vol > 0)
    labels, ncomp = ndimage.label(free.reshape(shape))
    del labels

    stats = {
        "simplices": cells_total - dropped,
        "irregular_simplices": int(vol.size),
        "dropped_degenerate_simplices": dropped,
        "repaired_sliver_simplices": slivers,
        "all_pinned_simplices_excluded": all_pinned_dropped,
        "free_nodes": int(np.count_nonzero(free)),
        "pinned_nodes": int(pinned.size),
        "interior_components": int(ncomp),
        "min_relative_simplex_volume": float(vol.min() / vol0) if vol.size else 1.0,
        "domain_volume": float(node_vol.sum()),
    }
    return ExteriorGrid(
        obstacle_set=obstacle_set,
        R_far=R_far,
        h=h,
        shape=shape,
        origin=origin,
        tags=tags,
        pinned=pinned,
        pinned_pos=pinned_pos,
        boundary_obstacle=bobs,
        cube_base=cube_base.astype(np.int64),
        cube_bits=cube_bits,
        irr_verts=verts_flat,
        irr_inv=inv,
        irr_vol=vol,
        irr_cell=irr_cells,
        node_vol=node_vol,
        stats=stats,
    )


def _sliver_mask(obstacle_set, R_far, pos, inv):
    """Snapped simplices on which the P1 interpolant of the boundary distance has slope > SLIVER_SLOPE.

    On such a simplex a 1-Lipschitz profile leaving the boundary interpolates
    to a gradient above 1, so the discrete cone constraint there would be
    stricter than the continuous one.
    """
    m, k, n = pos.shape
    if m == 0:
        return np.zeros(0, dtype=bool)
    flat = pos.reshape(-1, n)
    dist = np.min(obstacle_set.signed_distances(flat), axis=1)
    dist = np.minimum(dist, R_far - np.linalg.norm(flat, axis=1))
    dist = np.maximum(dist, 0.0).reshape(m, k)
    grads = np.concatenate([-inv.sum(axis=2, keepdims=True), inv], axis=2)
    slope = np.linalg.norm(np.einsum("mav,mv->ma", grads, dist), axis=1)
    return slope > SLIVER_SLOPE


def segment_clear(x, y, grid):
    """Whether every inner point of the segment x->y lies outside all obstacles.

    Uses exact segment/shape intersection tests (balls and boxes), so the
    answer does not depend on a sampling resolution.
    """
    obs = grid.obstacle_set if isinstance(grid, ExteriorGrid) else grid
    return bool(obs.segments_clear(np.asarray(x, float)[None], np.asarray(y, float)[None])[0])


def project_to_boundary(x, grid):
    """Nearest point of the obstacle surfaces and the obstacle index.

    Only defined within ``2 * h_grid`` of an obstacle surface.
    """
    x = np.asarray(x, dtype=float)
    d = grid.obstacle_set.signed_distances(x[None])[0]
    i = int(np.abs(d).argmin())
    if abs(d[i]) > 2.0 * grid.h:
        raise NotNearBoundary(f"point {x.tolist()} is {abs(d[i]):.4g} away from the boundary")
    return grid.obstacle_set.obstacles[i].project(x[None])[0], i
