"""Spacelike graphs of prescribed mean curvature outside obstacles in R^n.

The solver minimises the convex energy

    I(u) = int (1 - sqrt(1 - |grad u|^2)) + G(x, u),   G = n int_0^u H(x, s) ds,

over piecewise linear fields with |grad u| < 1, u = phi on the obstacles and
u = 0 on a far truncation sphere.
"""

from .analysis import decay_profile, light_segment_scan, weak_residual_check
from .boundary_data import (
    BoundaryDatum,
    DisplacingVerdict,
    boundary_lipschitz_constant,
    check_spacelike_displacing,
    extend_to_feasible,
)
from .errors import *  # noqa: F401,F403
from .functional import (
    CurvatureSpec,
    EnergyBreakdown,
    ScalarField,
    first_variation,
    frozen_energy,
    residual_gradient,
    total_energy,
)
from .geometry import Ball, Box, ExteriorGrid, ObstacleSet, build_grid, segment_clear
from .optimizer import SolveReport, SolverParams, backtracking_step, feasibility_audit, minimize
from .oracle_radial import RadialProfile, match_boundary_value, radial_profile, sample_on_grid

__version__ = "0.1.0"
