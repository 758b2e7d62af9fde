import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacelike_exterior.boundary_data import (
    BoundaryDatum,
    boundary_lipschitz_constant,
    boundary_values,
    check_spacelike_displacing,
    cutoff_profile,
    extend_to_feasible,
    limit_gradients,
)
from spacelike_exterior.errors import ConfigInvalid, CutoffTooTight, NotLipschitzEnough
from spacelike_exterior.functional import ScalarField
from spacelike_exterior.geometry import Ball, ObstacleSet, build_grid


@functools.cache
def _GRID8():
    return build_grid(ObstacleSet([Ball([0, 0, 0], 1.0)], 3), 8.0, 0.5)


@pytest.fixture(scope="module")
def grid8():
    return _GRID8()


def test_datum_kinds():
    x = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    assert np.all(BoundaryDatum.constant([0.3], 3)(x, [0, 0]) == 0.3)
    assert np.allclose(BoundaryDatum.constant([1, -1], 3)(x, [0, 1]), [1, -1])
    assert np.allclose(BoundaryDatum.expression("0.5*x1 + x2^2", 3)(x, 0), [0.5, 1.0])
    tab = BoundaryDatum.table([[1, 0, 0], [0, 1, 0]], [2.0, 3.0], 3)
    assert np.allclose(tab([[0.9, 0.1, 0], [0.1, 0.8, 0]], 0), [2.0, 3.0])
    with pytest.raises(ConfigInvalid):
        BoundaryDatum.constant([1.0, 2.0], 3)(x, [0, 2])
    with pytest.raises(ConfigInvalid):
        BoundaryDatum.expression("sqrt(-1 - x1^2)", 3)(x, 0)
    neg = BoundaryDatum.expression("x1", 3).negated()
    assert np.allclose(neg(x, 0), [-1.0, 0.0])


def test_displacing_constant_passes(two_ball_grid):
    v = check_spacelike_displacing(BoundaryDatum.constant([0.4], 3), two_ball_grid)
    assert v.verdict == "pass" and v.worst_ratio == 0.0


def test_displacing_counterexample_fails(two_ball_grid):
    v = check_spacelike_displacing(BoundaryDatum.constant([1.1, -1.1], 3), two_ball_grid)
    assert v.verdict == "fail"
    assert v.worst_ratio == pytest.approx(1.1, abs=1e-9)
    x, y = v.worst_pair
    assert {round(x[0], 9), round(y[0], 9)} == {-1.0, 1.0}


def test_displacing_lipschitz_half_passes(two_ball_grid):
    v = check_spacelike_displacing(BoundaryDatum.expression("0.5*x1", 3), two_ball_grid)
    assert v.verdict == "pass" and v.worst_ratio <= 0.5 + 1e-12


def test_displacing_marginal(two_ball_grid):
    v = check_spacelike_displacing(BoundaryDatum.constant([0.98, -0.98], 3), two_ball_grid, margin=0.05)
    assert v.verdict == "marginal"


def test_displacing_single_convex_is_vacuous(ball_grid):
    v = check_spacelike_displacing(BoundaryDatum.expression("3*x1", 3), ball_grid)
    assert v.passed and v.note


def test_lipschitz_estimates(ball_grid, two_ball_grid):
    assert boundary_lipschitz_constant(BoundaryDatum.constant([0.7], 3), ball_grid) == 0.0
    L = boundary_lipschitz_constant(BoundaryDatum.expression("0.5*x1", 3), ball_grid)
    assert 0.49 <= L <= 0.5 + 1e-12
    L2 = boundary_lipschitz_constant(BoundaryDatum.constant([1.1, -1.1], 3), two_ball_grid)
    assert L2 >= 1.1 - 1e-9


def test_extension_zero(ball_grid):
    w = extend_to_feasible(BoundaryDatum.constant([0.0], 3), ball_grid, 0.5)
    assert not np.any(w.values)


def test_extension_constant(grid8):
    c = 0.6
    ext = extend_to_feasible(BoundaryDatum.constant([c], 3), grid8, 0.5, details=True)
    w = ext.field
    assert w.max_gradient() <= c / ext.R_cut + 1e-12
    idx, vals = boundary_values(BoundaryDatum.constant([c], 3), grid8)
    assert np.array_equal(w.values[idx], vals)
    r = np.linalg.norm(grid8.active_points, axis=1)
    assert np.all(w.values[grid8.active[r >= 2 * ext.R_cut]] == 0.0)
    assert np.all((w.values >= 0.0) & (w.values <= c))


def test_extension_linear_example(grid8):
    phi = BoundaryDatum.expression("0.5*x1", 3)
    w = extend_to_feasible(phi, grid8, 0.5, R_cut=4.0)
    assert w.max_gradient() <= 0.5 + 0.5 / 4.0 + 1e-12
    idx, vals = boundary_values(phi, grid8)
    assert np.array_equal(w.values[idx], vals)
    assert np.abs(w.values).max() <= 0.5 + 1e-15


def test_extension_negation(grid8):
    phi = BoundaryDatum.expression("0.4*x1 + 0.2*x2*x3", 3)
    w = extend_to_feasible(phi, grid8, 0.3)
    wn = extend_to_feasible(phi.negated(), grid8, 0.3)
    assert np.allclose(wn.values, -w.values, atol=1e-12)


def test_extension_errors(grid8):
    with pytest.raises(NotLipschitzEnough):
        extend_to_feasible(BoundaryDatum.expression("0.9*x1", 3), grid8, 0.5)
    with pytest.raises(CutoffTooTight):
        extend_to_feasible(BoundaryDatum.constant([0.9], 3), grid8, 0.1)


def test_cutoff_profile():
    r = np.array([0.0, 1.0, 1.5, 2.0, 3.0])
    assert np.allclose(cutoff_profile(r, 1.0), [1, 1, 0.5, 0, 0])


def test_limiter_never_raises_max_gradient(ball_grid, rng=np.random.default_rng(3)):
    v = rng.uniform(-0.5, 0.5, ball_grid.num_nodes)
    v[ball_grid.pinned] = 0.0
    u = ScalarField(ball_grid, v)
    before = u.max_gradient()
    limit_gradients(u, 0.8, -0.5, 0.5)
    assert u.max_gradient() <= max(0.8, before) + 1e-12
    assert np.all(u.values[ball_grid.pinned] == 0.0)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3), st.floats(-0.2, 0.2))
def test_extension_random_linear(coeffs, c0):
    g = _GRID8()
    a = np.array(coeffs)
    if np.linalg.norm(a) > 0.5:
        a *= 0.5 / np.linalg.norm(a)
    a = [float(x) for x in a]
    expr = f"{c0!r} + ({a[0]!r})*x1 + ({a[1]!r})*x2 + ({a[2]!r})*x3"
    phi = BoundaryDatum.expression(expr, 3)
    # sup |phi| <= 0.7, so R_cut = 4 keeps sup/R_cut below eps
    ext = extend_to_feasible(phi, g, 0.25, R_cut=4.0, details=True)
    idx, vals = boundary_values(phi, g)
    assert np.array_equal(ext.field.values[idx], vals)
    assert ext.field.max_gradient() <= ext.bound + 1e-12 < 1.0
