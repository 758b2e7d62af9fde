"""Post-solve diagnostics: spacelike margin, near-null chains, weak residual, decay."""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels
from .functional import (
    ScalarField,
    dirichlet_seminorm,
    first_variation,
    irregular_gradient_sq,
)

ALIGN_DEG = 5.0


def _cube_cells(grid):
    """Cell-grid flat index of every entry of ``grid.cube_base``."""
    multi = np.unravel_index(grid.cube_base, grid.shape)
    return np.ravel_multi_index(multi, grid.cell_shape)


def cube_steepest(u):
    """Per cell: the largest simplex |grad u| and that simplex's gradient.

    Returns ``(cells, norms, grads)`` over every cell holding an active simplex.
    """
    grid = u.grid
    offs, axis = grid.perm_tables
    q, g = _kernels.regular_cube_steepest(u.values, grid.cube_base, grid.cube_bits, offs, axis, grid.h)
    cells = _cube_cells(grid)
    keep = q >= 0
    cells, q, g = cells[keep], q[keep], g[keep]
    if grid.irr_vol.size:
        from .functional import _irregular_gradients

        gi = _irregular_gradients(grid, u.values)
        qi = np.einsum("mi,mi->m", gi, gi)
        order = np.lexsort((-qi, grid.irr_cell))
        first = np.ones(order.size, dtype=bool)
        first[1:] = grid.irr_cell[order][1:] != grid.irr_cell[order][:-1]
        sel = order[first]
        cells = np.concatenate([cells, grid.irr_cell[sel]])
        q = np.concatenate([q, qi[sel]])
        g = np.concatenate([g, gi[sel]])
        # a cell can hold regular and irregular simplices: keep the steeper
        order = np.lexsort((-q, cells))
        first = np.ones(order.size, dtype=bool)
        first[1:] = cells[order][1:] != cells[order][:-1]
        sel = order[first]
        cells, q, g = cells[sel], q[sel], g[sel]
    return cells, np.sqrt(q), g


def count_above(u, level):
    """Number of active simplices with |grad u| > level."""
    grid = u.grid
    offs, _ = grid.perm_tables
    level2 = level * level if level > 0 else -1.0
    count = _kernels.regular_count_above(u.values, grid.cube_base, grid.cube_bits, offs, grid.h, level2)
    if grid.irr_vol.size:
        count += int(np.count_nonzero(irregular_gradient_sq(grid, u.values) > level2))
    return int(count)


def cell_centres(grid, cells):
    multi = np.stack(np.unravel_index(cells, grid.cell_shape), axis=-1)
    return grid.origin + grid.h * (multi + 0.5)


def compact_margin(u, radius=None):
    """1 - max |grad u| over cells whose centre lies within ``radius``.

    The default radius ``R_far - 2*h_grid`` leaves out the shell of cells
    touching the truncation sphere.  Returns ``(margin, worst cell centre)``.
    """
    grid = u.grid
    radius = grid.R_far - 2.0 * grid.h if radius is None else radius
    cells, norms, _ = cube_steepest(u)
    if cells.size == 0:
        return 1.0, None
    centres = cell_centres(grid, cells)
    inside = np.linalg.norm(centres, axis=1) < radius
    if not np.any(inside):
        return 1.0, None
    k = np.argmax(np.where(inside, norms, -1.0))
    return 1.0 - float(norms[k]), centres[k]


@dataclass
class LightChain:
    """Connected cells with near-null, mutually aligned gradients."""

    cells: int
    direction: np.ndarray
    start: np.ndarray
    end: np.ndarray
    length: float
    max_gradient: float
    touches_boundary: bool
    touches_farfield: bool
    kind: str

    def to_dict(self):
        out = dict(self.__dict__)
        for k in ("direction", "start", "end"):
            out[k] = np.asarray(out[k]).tolist()
        return out


def _cell_corner_flags(grid, cells, nodes_mask):
    multi = np.stack(np.unravel_index(cells, grid.cell_shape), axis=-1)
    hit = np.zeros(cells.size, dtype=bool)
    for corner in itertools.product((0, 1), repeat=grid.n):
        idx = np.ravel_multi_index(tuple((multi + np.array(corner)).T), grid.shape)
        hit |= nodes_mask[idx]
    return hit


def light_segment_scan(u, threshold=1e-3, align_deg=ALIGN_DEG):
    """Chains of adjacent cells with |grad u| > 1 - threshold and aligned gradients.

    Cells are grouped by face/edge/corner adjacency; inside each group cells
    whose gradient directions lie within ``align_deg`` of a seed direction
    form one chain.  Chains are classified as ``"boundary"`` (touching an
    obstacle: candidate lightlike segment), ``"farfield"`` (reaching the
    truncation sphere: candidate light ray, or a truncation artifact),
    ``"boundary-farfield"`` or ``"interior"``.  All verdicts are candidates.
    """
    if not 0.0 < threshold < 0.1:
        raise ValueError("threshold must lie in (0, 0.1)")
    grid = u.grid
    cells, norms, grads = cube_steepest(u)
    hot = norms > 1.0 - threshold
    if not np.any(hot):
        return []
    cells, norms, grads = cells[hot], norms[hot], grads[hot]
    dirs = grads / norms[:, None]
    bnd_mask = np.zeros(grid.num_nodes, dtype=bool)
    bnd_mask[grid.boundary_nodes] = True
    far_mask = np.zeros(grid.num_nodes, dtype=bool)
    far_mask[grid.farfield_nodes] = True
    touch_b = _cell_corner_flags(grid, cells, bnd_mask)
    touch_f = _cell_corner_flags(grid, cells, far_mask)
    centres = cell_centres(grid, cells)
    structure = ndimage.generate_binary_structure(grid.n, grid.n)
    cos_tol = np.cos(np.deg2rad(align_deg))

    chains = []
    remaining = np.ones(cells.size, dtype=bool)
    while np.any(remaining):
        seed = np.flatnonzero(remaining)[np.argmax(norms[remaining])]
        aligned = remaining & (dirs @ dirs[seed] >= cos_tol)
        mask = np.zeros(grid.cell_shape, dtype=bool)
        mask.ravel()[cells[aligned]] = True
        labels, _ = ndimage.label(mask, structure=structure)
        lab = labels.ravel()[cells]
        member = aligned & (lab == lab[seed])
        remaining &= ~member
        d = dirs[member].mean(axis=0)
        d /= np.linalg.norm(d)
        proj = centres[member] @ d
        tb, tf = bool(touch_b[member].any()), bool(touch_f[member].any())
        kind = {(True, True): "boundary-farfield", (True, False): "boundary",
                (False, True): "farfield", (False, False): "interior"}[(tb, tf)]
        chains.append(LightChain(
            cells=int(member.sum()),
            direction=d,
            start=centres[member][np.argmin(proj)],
            end=centres[member][np.argmax(proj)],
            length=float(proj.max() - proj.min() + grid.h),
            max_gradient=float(norms[member].max()),
            touches_boundary=tb,
            touches_farfield=tf,
            kind=kind,
        ))
    chains.sort(key=lambda c: -c.cells)
    return chains


def bump_field(grid, centre, scale):
    """Tensor-product bump prod_k (1 - t_k^2)^3, t_k = (x_k - c_k)/scale, zero at pinned nodes."""
    v = np.zeros(grid.num_nodes)
    pts = grid.active_points
    t = (pts - centre) / scale
    inside = np.all(np.abs(t) < 1.0, axis=1)
    v[grid.active[inside]] = np.prod((1.0 - t[inside] ** 2) ** 3, axis=1)
    v[grid.pinned] = 0.0
    return ScalarField(grid, v)


def weak_residual_check(u, spec, trials=20, rng=None):
    """Largest |dI(u)[v]| / ||grad v||_2 over random bump test fields v."""
    grid = u.grid
    rng = np.random.default_rng(0) if rng is None else rng
    reach = grid.R_far - grid.h
    worst = 0.0
    done = 0
    while done < trials:
        c = rng.uniform(-reach, reach, size=grid.n)
        if np.linalg.norm(c) > reach:
            continue
        scale = rng.uniform(2.0 * grid.h, max(2.0 * grid.h, 0.25 * grid.R_far))
        v = bump_field(grid, c, scale)
        norm = dirichlet_seminorm(v)
        if norm == 0.0:
            continue
        done += 1
        worst = max(worst, abs(first_variation(u, v, spec)) / norm)
    return worst


@dataclass
class DecayProfile:
    radii: list
    sups: list
    monotone: bool
    final_ratio: float
    fraction: float
    verdict: str
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)


def decay_profile(u, radii=None, phi_sup=None, fraction=0.1, width=None):
    """Shell suprema of |u| at the given radii and a decay verdict.

    The verdict is ``"decaying"`` when the suprema do not increase with r and
    the last one is at most ``fraction * phi_sup``; otherwise ``"not decaying"``.
    """
    grid = u.grid
    ext = grid.obstacle_set.extent
    if radii is None:
        radii = np.linspace(max(ext + grid.h, 2.0 * ext), grid.R_far - grid.h, 8)
    radii = [float(r) for r in radii]
    for r in radii:
        if not ext < r < grid.R_far:
            raise ValueError(f"radius {r} outside (extent, R_far)")
    width = grid.h if width is None else width
    pts = grid.active_points
    rr = np.linalg.norm(pts, axis=1)
    vals = np.abs(u.values[grid.active])
    sups = []
    for r in radii:
        sel = np.abs(rr - r) <= 0.5 * width
        sups.append(float(vals[sel].max(initial=0.0)))
    if phi_sup is None:
        phi_sup = float(np.abs(u.values[grid.boundary_nodes]).max(initial=0.0))
    tol = 1e-12 * max(phi_sup, 1.0)
    monotone = bool(np.all(np.diff(sups) <= tol))
    final_ratio = sups[-1] / phi_sup if phi_sup > 0 else 0.0
    ok = monotone and sups[-1] <= fraction * phi_sup + tol
    return DecayProfile(radii, sups, monotone, final_ratio, fraction,
                        "decaying" if ok else "not decaying")
