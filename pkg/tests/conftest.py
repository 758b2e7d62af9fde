import numpy as np
import pytest

from spacelike_exterior.geometry import Ball, Box, ObstacleSet, build_grid

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed and call.excinfo is not None:
        detail = (detail + "; " if detail else "") + call.excinfo.exconly().splitlines()[0][:160]
    _CRITERIA[mark.args[0]] = ("PASS" if rep.passed else "FAIL", mark.args[1], detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d} {status}: {title} | {detail}")


@pytest.fixture(scope="session")
def ball_grid():
    """Unit ball at the origin, coarse."""
    return build_grid(ObstacleSet([Ball([0.0, 0.0, 0.0], 1.0)], 3), 4.0, 0.5)


@pytest.fixture(scope="session")
def ball_grid_fine():
    return build_grid(ObstacleSet([Ball([0.0, 0.0, 0.0], 1.0)], 3), 6.0, 0.25)


@pytest.fixture(scope="session")
def two_ball_grid():
    obs = ObstacleSet([Ball([-2.0, 0.0, 0.0], 1.0), Ball([2.0, 0.0, 0.0], 1.0)], 3)
    return build_grid(obs, 10.0, 0.5)


@pytest.fixture(scope="session")
def box_grid():
    return build_grid(ObstacleSet([Box([-1.0, -0.5, -0.5], [1.0, 0.5, 0.5])], 3), 5.0, 0.5)


def random_feasible(grid, rng, margin=0.05, bumps=3, amplitude=None):
    """Random bump field with pinned values zero and max |grad| <= 1 - margin."""
    from spacelike_exterior.analysis import bump_field
    from spacelike_exterior.functional import ScalarField

    v = np.zeros(grid.num_nodes)
    reach = 0.8 * grid.R_far
    for _ in range(bumps):
        c = rng.uniform(-reach, reach, size=grid.n)
        v += rng.normal() * bump_field(grid, c, rng.uniform(2 * grid.h, 0.5 * grid.R_far)).values
    u = ScalarField(grid, v)
    g = u.max_gradient()
    if g == 0.0:
        return u
    target = (1.0 - margin) * (rng.uniform(0.2, 1.0) if amplitude is None else amplitude)
    return ScalarField(grid, v * (target / g))
