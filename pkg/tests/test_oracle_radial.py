import mpmath
import numpy as np
import pytest

from spacelike_exterior.errors import GeometryMismatch, Unattainable
from spacelike_exterior.geometry import Ball, ObstacleSet, build_grid
from spacelike_exterior.oracle_radial import (
    match_boundary_value,
    profile_value,
    radial_profile,
    sample_on_grid,
    slope,
)

mpmath.mp.dps = 30


def _mp_value(n, a, r, R_outer=None):
    """Independent reference: arbitrary-precision tanh-sinh quadrature."""
    f = lambda s: a / mpmath.sqrt(s ** (2 * (n - 1)) + a * a)
    upper = mpmath.inf if R_outer is None else R_outer
    return float(mpmath.quad(f, [r, 2 * r, 10 * r, upper]))


def test_elliptic_closed_form():
    # n = 3, a = 1: int_1^inf ds / sqrt(s^4 + 1) = K(1/2) / 2
    exact = float(mpmath.ellipk(0.5) / 2)
    assert exact == pytest.approx(0.927037338650686, abs=1e-15)
    assert profile_value(3, 1.0, 1.0) == pytest.approx(exact, abs=1e-10)
    prof = radial_profile(3, 1.0, 1.0, 12.0)
    assert prof(1.0) == pytest.approx(exact, abs=1e-10)


@pytest.mark.parametrize("n,a,r,R_outer", [
    (3, 0.3, 1.0, None), (3, 2.5, 1.7, None), (4, 0.8, 1.2, None),
    (3, 0.5, 2.0, 12.0), (5, 1.5, 1.0, 6.0),
])
def test_values_match_mpmath(n, a, r, R_outer):
    assert profile_value(n, a, r, R_outer) == pytest.approx(_mp_value(n, a, r, R_outer), abs=1e-10)


def test_table_matches_direct_quadrature():
    prof = radial_profile(3, 0.7, 1.0, 12.0)
    for r in (1.0, 1.3, 2.0, 5.5, 11.0, 12.0):
        assert prof(r) == pytest.approx(_mp_value(3, 0.7, r), abs=1e-10)


def test_far_field_decay():
    # r^(n-2) u(r) -> a / (n - 2)
    for n, a in ((3, 1.0), (4, 2.0)):
        r = 1e3
        assert r ** (n - 2) * profile_value(n, a, r) == pytest.approx(a / (n - 2), rel=1e-5)


def test_first_integral_and_slope():
    prof = radial_profile(3, 0.9, 1.0, 8.0)
    r = np.linspace(1.0, 8.0, 50)
    assert np.allclose(prof.first_integral(r), -0.9, rtol=1e-13)
    assert np.all(np.abs(slope(r, 3, 0.9)) < 1.0)
    assert prof.max_slope == pytest.approx(0.9 / np.sqrt(1 + 0.81))


def test_scaling():
    # u_{lambda^(n-1) a}(lambda r; lambda r0) = lambda u_a(r; r0)
    lam, n, a = 2.0, 3, 0.6
    assert profile_value(n, lam ** (n - 1) * a, lam * 1.5) == pytest.approx(lam * profile_value(n, a, 1.5), rel=1e-11)


@pytest.mark.parametrize("c", [0.3, -0.3, 0.9, 2.0])
def test_match_boundary_value(c):
    a = match_boundary_value(3, 1.0, c)
    assert np.sign(a) == np.sign(c)
    assert profile_value(3, abs(a), 1.0) == pytest.approx(abs(c), abs=1e-10)


def test_truncated_match_and_limit():
    a = match_boundary_value(3, 1.0, 0.3, R_outer=12.0)
    assert _mp_value(3, a, 1.0, 12.0) == pytest.approx(0.3, abs=1e-10)
    assert match_boundary_value(3, 1.0, 0.0) == 0.0
    with pytest.raises(Unattainable):
        match_boundary_value(3, 1.0, 11.5, R_outer=12.0)
    with pytest.raises(Unattainable):
        match_boundary_value(3, 1.0, np.inf)


def test_sample_on_grid(ball_grid):
    prof = radial_profile(3, match_boundary_value(3, 1.0, 0.3, R_outer=4.0), 1.0, 4.0, R_outer=4.0)
    u = sample_on_grid(prof, ball_grid)
    bnd = ball_grid.boundary_nodes
    assert np.allclose(u.values[bnd], 0.3, atol=1e-9)
    assert np.allclose(u.values[ball_grid.farfield_nodes], 0.0, atol=1e-9)
    assert u.max_gradient() < 1.0


def test_sample_geometry_mismatch(two_ball_grid, ball_grid):
    prof = radial_profile(3, 0.5, 1.0, 10.0)
    with pytest.raises(GeometryMismatch):
        sample_on_grid(prof, two_ball_grid)
    with pytest.raises(GeometryMismatch):
        sample_on_grid(radial_profile(3, 0.5, 1.0, 3.0), ball_grid)
    off = build_grid(ObstacleSet([Ball([0.5, 0, 0], 1.0)], 3), 4.0, 0.5)
    with pytest.raises(GeometryMismatch):
        sample_on_grid(radial_profile(3, 0.5, 1.0, 4.0), off)
