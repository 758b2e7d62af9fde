import json

import numpy as np
import pytest

from spacelike_exterior.boundary_data import BoundaryDatum, boundary_values
from spacelike_exterior.errors import NoFeasibleStart
from spacelike_exterior.functional import CurvatureSpec, ScalarField, residual_gradient, total_energy
from spacelike_exterior.optimizer import (
    SolverParams,
    backtracking_step,
    feasibility_audit,
    harmonic_extension,
    initial_iterate,
    minimize,
    stiffness_matrix,
)


@pytest.fixture(scope="module")
def gauss():
    return CurvatureSpec("x-only", 3, H="exp(-(x1^2 + x2^2 + x3^2))")


@pytest.fixture(scope="module")
def ball_solution(ball_grid):
    phi = BoundaryDatum.constant([0.3], 3)
    u, rep = minimize(CurvatureSpec.zero(), phi, ball_grid)
    return phi, u, rep


def test_zero_instance(ball_grid):
    u, rep = minimize(CurvatureSpec.zero(), BoundaryDatum.constant([0.0], 3), ball_grid)
    assert u.sup_norm() == 0.0
    assert rep.energy.total == 0.0 and rep.iterations == 0
    assert rep.reason == "zero gradient"


def test_params_validation():
    with pytest.raises(ValueError):
        SolverParams(beta=1.0)
    with pytest.raises(ValueError):
        SolverParams(tol_g=0.0)
    with pytest.raises(ValueError):
        SolverParams(eps=1.5)


def test_backtracking_rejects_cone_exit(ball_grid, gauss):
    u = ScalarField.zeros(ball_grid)
    g = residual_gradient(u, gauss)
    d = ScalarField(ball_grid, -g.values)
    # scale so that the full step lands at |grad| = 1.05
    d = ScalarField(ball_grid, d.values * (1.05 / d.max_gradient()))
    params = SolverParams()
    new, a = backtracking_step(u, d, 1.0, params, gauss)
    assert a < 1.0 and a == params.beta ** round(np.log(a) / np.log(params.beta))
    assert new.max_gradient() <= 1.0 - params.delta_floor
    slope = float(np.dot(g.values, d.values))
    assert total_energy(new, gauss).total <= total_energy(u, gauss).total + 1e-4 * a * slope


def test_backtracking_contract_edges(ball_grid, gauss):
    u = ScalarField.zeros(ball_grid)
    g = residual_gradient(u, gauss)
    with pytest.raises(ValueError):
        backtracking_step(u, g, 1.0, SolverParams(), gauss)
    same, a = backtracking_step(u, ScalarField.zeros(ball_grid), 1.0, SolverParams(), gauss)
    assert same is u and a == 0.0


def test_stiffness_symmetric_positive(ball_grid):
    K, free = stiffness_matrix(ball_grid)
    assert K.shape == (free.size, free.size)
    assert abs(K - K.T).max() < 1e-12
    x = np.random.default_rng(0).normal(size=K.shape[0])
    assert x @ (K @ x) > 0


def test_harmonic_extension(ball_grid):
    vals = np.zeros(ball_grid.num_nodes)
    idx, bv = boundary_values(BoundaryDatum.constant([0.3], 3), ball_grid)
    vals[idx] = bv
    w = harmonic_extension(ball_grid, vals)
    assert np.array_equal(w.values[ball_grid.pinned], vals[ball_grid.pinned])
    K, free, K_fp, pinned = stiffness_matrix(ball_grid, coupling=True)
    r = K @ w.values[free] + K_fp @ w.values[pinned]
    assert np.abs(r).max() < 1e-8
    assert w.values[free].max() <= 0.3 + 1e-6


def test_initial_iterate_feasible(ball_grid):
    phi = BoundaryDatum.constant([0.3], 3)
    for blend in (False, True):
        w, info = initial_iterate(CurvatureSpec.zero(), phi, ball_grid, SolverParams(blend=blend))
        assert w.max_gradient() < 1.0
        idx, vals = boundary_values(phi, ball_grid)
        assert np.array_equal(w.values[idx], vals)
        assert info["kind"] == "cutoff extension"


def test_minimize_converges(ball_solution, ball_grid):
    phi, u, rep = ball_solution
    assert rep.converged and rep.residual <= rep.params["tol_g"]
    assert np.all(np.diff(rep.energy_trace) <= 0.0)
    idx, vals = boundary_values(phi, ball_grid)
    assert np.array_equal(u.values[idx], vals)
    assert rep.margin > 0.0
    margin, _, _ = feasibility_audit(u)
    assert margin == rep.margin
    json.dumps(rep.to_dict())


def test_minimize_is_deterministic(ball_solution, ball_grid):
    phi, u, rep = ball_solution
    u2, rep2 = minimize(CurvatureSpec.zero(), phi, ball_grid)
    assert np.array_equal(u.values, u2.values) and rep2.iterations == rep.iterations


def test_minimize_from_given_start(ball_solution, ball_grid):
    phi, u, rep = ball_solution
    u2, rep2 = minimize(CurvatureSpec.zero(), phi, ball_grid, start=u)
    assert rep2.start["kind"] == "given"
    assert np.abs(u2.values - u.values).max() < 1e-6


def test_minimize_without_preconditioner(ball_grid, gauss):
    phi = BoundaryDatum.constant([0.0], 3)
    u, rep = minimize(gauss, phi, ball_grid, params=SolverParams(max_iterations=5), precondition=False)
    assert rep.iterations == 5 and rep.reason == "max_iterations"
    assert np.all(np.diff(rep.energy_trace) <= 0.0)


def test_infeasible_start_rejected(ball_grid):
    bad = ScalarField.from_function(ball_grid, lambda x: 2.0 * x[:, 0])
    with pytest.raises(NoFeasibleStart):
        minimize(CurvatureSpec.zero(), BoundaryDatum.constant([0.0], 3), ball_grid, start=bad)
