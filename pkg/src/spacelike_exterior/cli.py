"""Command line front end: check boundary data, solve, or compare with the radial oracle.

Exit status: 0 success, 1 invalid configuration, 2 inadmissible data
(Lipschitz constant too large or the displacing test fails), 3 solver did
not converge.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import compact_margin, decay_profile, light_segment_scan, weak_residual_check
from .boundary_data import BoundaryDatum, boundary_lipschitz_constant, check_spacelike_displacing
from .config import load_config
from .errors import (
    ConfigInvalid,
    NoFeasibleStart,
    SolverError,
    StalledInfeasible,
)
from .functional import CurvatureSpec
from .geometry import ObstacleSet, build_grid, obstacle_from_dict
from .optimizer import SolverParams, minimize
from .oracle_radial import match_boundary_value, radial_profile, sample_on_grid

EXIT_OK, EXIT_CONFIG, EXIT_REJECTED, EXIT_NOT_CONVERGED = 0, 1, 2, 3


def build_problem(cfg):
    """Objects described by a validated configuration."""
    dom = cfg["domain"]
    n = dom["dimension"]
    try:
        obstacles = ObstacleSet([obstacle_from_dict(o, n) for o in dom["obstacles"]], n)
        grid = build_grid(obstacles, dom["R_far"], dom["h_grid"])
    except (ValueError, SolverError) as exc:
        raise ConfigInvalid(str(exc), "domain") from None
    b = cfg["boundary"]
    try:
        if b["kind"] == "constant":
            phi = BoundaryDatum.constant(b["values"], n)
        elif b["kind"] == "expression":
            phi = BoundaryDatum.expression(b["expression"], n)
        else:
            phi = BoundaryDatum.table(b["points"], b["values"], n)
        if b["kind"] == "constant" and np.size(b["values"]) not in (1, len(obstacles)):
            raise ConfigInvalid("give one value or one per obstacle", "boundary.values")
    except ValueError as exc:
        raise ConfigInvalid(str(exc), "boundary") from None
    c = dict(cfg["curvature"])
    try:
        spec = CurvatureSpec(c.pop("form"), n, **c)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc), "curvature") from None
    try:
        params = SolverParams(**cfg["solver"])
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc), "solver") from None
    return grid, phi, spec, params


def write_vtk(path, u):
    """Legacy VTK structured points, x-fastest, with the field and node tags."""
    grid = u.grid
    if grid.n != 3:
        return False
    nx, ny, nz = grid.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\nspacelike graph u\nASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {nx} {ny} {nz}\n")
        fh.write("ORIGIN {:.17g} {:.17g} {:.17g}\n".format(*np.broadcast_to(grid.origin, (3,))))
        fh.write(f"SPACING {grid.h:.17g} {grid.h:.17g} {grid.h:.17g}\n")
        fh.write(f"POINT_DATA {grid.num_nodes}\nSCALARS u double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, u.values.reshape(grid.shape).ravel(order="F"), fmt="%.17g")
        fh.write("SCALARS tag int 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, grid.tags.ravel(order="F"), fmt="%d")
    return True


def write_csv(path, u):
    grid = u.grid
    idx = grid.active
    cols = np.column_stack([grid.positions(idx), grid.tags.ravel()[idx], u.values[idx]])
    head = ",".join([f"x{k + 1}" for k in range(grid.n)] + ["tag", "u"])
    fmt = ["%.17g"] * grid.n + ["%d", "%.17g"]
    np.savetxt(path, cols, delimiter=",", header=head, comments="", fmt=fmt)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def admissibility(phi, grid, cfg, seed):
    b = cfg["boundary"]
    verdict = check_spacelike_displacing(phi, grid, b["margin"], b["samples"], seed)
    L = boundary_lipschitz_constant(phi, grid, b["samples"], seed)
    rejected = verdict.verdict == "fail" or L >= 1.0
    return {"displacing": verdict.to_dict(), "lipschitz_estimate": L}, rejected


def diagnostics(u, spec, cfg, phi_sup, rep, seed):
    out = cfg["output"]
    margin, where = compact_margin(u)
    chains = light_segment_scan(u, 1e-3)
    diag = {
        "feasibility": {"margin": rep.margin, "worst_cell": rep.worst_cell,
                        "near_degenerate_cells": rep.near_degenerate},
        "compact_margin": {"margin": margin, "worst_cell": where},
        "light_segments": [c.to_dict() for c in chains],
        "decay": decay_profile(u, phi_sup=phi_sup, fraction=out["decay_fraction"]).to_dict(),
    }
    if out["residual_trials"]:
        rng = np.random.default_rng(seed)
        diag["weak_residual"] = weak_residual_check(u, spec, out["residual_trials"], rng)
    return diag


def run(cfg, mode=None, trace_path=None, out_dir=None, stream=sys.stdout):
    """Execute a validated configuration; returns the exit status."""
    mode = mode or cfg["mode"]
    cfg = dict(cfg, mode=mode)
    seed = int(os.environ.get("SOLVER_SEED", "0"))
    out = Path(out_dir or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    trace_path = trace_path or cfg["output"]["trace"]
    grid, phi, spec, params = build_problem(cfg)
    report = {"mode": mode, "config": cfg, "seed": seed, "grid": grid.summary()}
    status = EXIT_OK

    adm, rejected = admissibility(phi, grid, cfg, seed)
    report["admissibility"] = adm
    if mode == "check" or rejected:
        status = EXIT_REJECTED if rejected else EXIT_OK
        report["status"] = "rejected" if rejected else "admissible"
        return _finish(out, report, status, stream)

    if mode == "oracle-compare":
        if spec.form != "zero" or phi.kind != "constant" or np.ptp(phi.values) != 0:
            raise ConfigInvalid("oracle-compare needs H = 0 and one constant boundary value", "mode")
    trace_fh = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        def emit(rec):
            if trace_fh:
                trace_fh.write(json.dumps(rec, default=_json_default) + "\n")

        try:
            u, rep = minimize(spec, phi, grid, params, trace=emit)
        except NoFeasibleStart as exc:
            report["status"] = "rejected"
            report["error"] = str(exc)
            return _finish(out, report, EXIT_REJECTED, stream)
        except StalledInfeasible as exc:
            report["status"] = "not converged"
            report["error"] = str(exc)
            return _finish(out, report, EXIT_NOT_CONVERGED, stream)
    finally:
        if trace_fh:
            trace_fh.close()

    rep_dict = rep.to_dict()
    rep_dict.pop("seconds", None)
    report["solve"] = rep_dict
    phi_sup = float(np.max(np.abs(u.values[grid.boundary_nodes]), initial=0.0))
    report["diagnostics"] = diagnostics(u, spec, cfg, phi_sup, rep, seed)
    status = EXIT_OK if rep.converged else EXIT_NOT_CONVERGED
    report["status"] = "converged" if rep.converged else "not converged"

    if mode == "oracle-compare":
        report["oracle"] = oracle_compare(u, phi, cfg, out)

    if cfg["output"]["field"]:
        report["field_file"] = "field.vtk" if write_vtk(out / "field.vtk", u) else None
    if cfg["output"]["csv"]:
        write_csv(out / "field.csv", u)
        report["csv_file"] = "field.csv"
    return _finish(out, report, status, stream)


def oracle_compare(u, phi, cfg, out):
    grid = u.grid
    n = grid.n
    c = float(phi.values[0])
    r0 = grid.obstacle_set.obstacles[0].radius
    a_trunc = match_boundary_value(n, r0, c, R_outer=grid.R_far)
    a_inf = match_boundary_value(n, r0, c)
    trunc = radial_profile(n, a_trunc, r0, grid.R_far, R_outer=grid.R_far)
    inf = radial_profile(n, a_inf, r0, grid.R_far)
    act = grid.active
    scale = abs(c) if c else 1.0
    diff = float(np.max(np.abs(u.values[act] - sample_on_grid(trunc, grid).values[act]))) / scale
    diff_inf = float(np.max(np.abs(u.values[act] - sample_on_grid(inf, grid).values[act]))) / scale
    np.savetxt(out / "oracle_profile.csv", trunc.table(), delimiter=",", header="r,u", comments="",
               fmt="%.17g")
    tol = cfg["output"]["oracle_tolerance"]
    return {
        "flux_truncated": a_trunc,
        "flux_exterior": a_inf,
        "relative_sup_diff": diff,
        "relative_sup_diff_exterior": diff_inf,
        "tolerance": tol,
        "pass": diff <= tol,
        "table": "oracle_profile.csv",
    }


def _finish(out, report, status, stream):
    report["exit_status"] = status
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    summary = {"status": report.get("status"), "exit": status, "report": str(out / "report.json")}
    print(json.dumps(summary), file=stream)
    return status


def main(argv=None):
    parser = argparse.ArgumentParser(prog="spacelike-exterior", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--mode", choices=["check", "solve", "oracle-compare"], help="override the config mode")
    parser.add_argument("--threads", type=int, default=None, help="cap on kernel worker threads")
    parser.add_argument("--trace", default=None, help="write per-iteration records (JSON lines) here")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)
    if args.threads is not None:
        import numba

        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        cfg = load_config(args.config)
        return run(cfg, args.mode, args.trace, args.out)
    except ConfigInvalid as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
