import json

import pytest

from spacelike_exterior.cli import main
from spacelike_exterior.config import parse_config
from spacelike_exterior.errors import ConfigInvalid

BALL = {"type": "ball", "center": [0, 0, 0], "radius": 1.0}


def _config(**over):
    cfg = {
        "mode": "solve",
        "domain": {"dimension": 3, "R_far": 4.0, "h_grid": 0.5, "obstacles": [BALL]},
        "boundary": {"kind": "constant", "values": 0.0},
        "output": {"residual_trials": 3},
    }
    for key, val in over.items():
        if isinstance(val, dict) and key in cfg:
            cfg[key] = dict(cfg[key], **val)
        else:
            cfg[key] = val
    return cfg


def _run(tmp_path, cfg, *extra, name="run"):
    path = tmp_path / f"{name}.json"
    path.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
    out = tmp_path / name
    code = main(["--config", str(path), "--out", str(out), *extra])
    report = out / "report.json"
    return code, (json.loads(report.read_text()) if report.exists() else None), out


def test_zero_instance(tmp_path):
    code, rep, out = _run(tmp_path, _config())
    assert code == 0
    assert rep["solve"]["energy"]["total"] == 0.0
    assert rep["status"] == "converged"
    assert (out / "field.vtk").read_text().startswith("# vtk DataFile")
    assert (out / "field.csv").read_text().splitlines()[0] == "x1,x2,x3,tag,u"


def test_two_ball_check_rejected(tmp_path):
    cfg = _config(mode="check", domain={"R_far": 10.0, "obstacles": [
        {"type": "ball", "center": [-2, 0, 0], "radius": 1.0},
        {"type": "ball", "center": [2, 0, 0], "radius": 1.0}]},
        boundary={"values": [1.1, -1.1]})
    code, rep, _ = _run(tmp_path, cfg)
    assert code == 2
    disp = rep["admissibility"]["displacing"]
    assert disp["verdict"] == "fail" and disp["worst_ratio"] >= 1.05
    assert sorted(p[0] for p in disp["worst_pair"]) == pytest.approx([-1.0, 1.0])
    cfg["boundary"]["values"] = [0.9, -0.9]
    code, rep, _ = _run(tmp_path, cfg, name="pass")
    assert code == 0 and rep["status"] == "admissible"


def test_steep_expression_rejected(tmp_path):
    cfg = _config(boundary={"kind": "expression", "expression": "1.5*x1"})
    code, rep, _ = _run(tmp_path, cfg)
    assert code == 2 and rep["admissibility"]["lipschitz_estimate"] >= 1.0


def test_oracle_compare(tmp_path):
    cfg = _config(mode="oracle-compare", boundary={"values": 0.3})
    code, rep, out = _run(tmp_path, cfg)
    assert code == 0
    orc = rep["oracle"]
    assert orc["relative_sup_diff"] < 0.1
    assert (out / "oracle_profile.csv").exists()


def test_oracle_compare_needs_radial_instance(tmp_path, capsys):
    cfg = _config(mode="oracle-compare", boundary={"kind": "expression", "expression": "0.2*x1"})
    code, _, _ = _run(tmp_path, cfg)
    assert code == 1 and "oracle-compare" in capsys.readouterr().err


def test_not_converged(tmp_path):
    cfg = _config(boundary={"values": 0.3}, solver={"max_iterations": 1})
    code, rep, _ = _run(tmp_path, cfg)
    assert code == 3 and rep["status"] == "not converged"


@pytest.mark.parametrize("text,where", [
    ('{"domain": {"dimension": 3,,}}', "line 1"),
    (json.dumps(_config(domain={"h_grid": -1})), "domain.h_grid"),
    (json.dumps(_config(domain={"obstacles": [{"type": "box", "lo": [1, 0, 0], "hi": [0, 1, 1]}]})),
     "domain.obstacles[0]"),
    (json.dumps(_config(boundary={"kind": "expression"})), "boundary"),
    (json.dumps(_config(solver={"beta": 2})), "solver.beta"),
])
def test_config_errors(tmp_path, capsys, text, where):
    code, rep, _ = _run(tmp_path, text)
    assert code == 1 and rep is None
    assert where in capsys.readouterr().err


def test_parse_config_location():
    with pytest.raises(ConfigInvalid) as info:
        parse_config('{\n  "domain": 3,\n}')
    assert info.value.where.startswith("line 3")


def test_deterministic_report_and_trace(tmp_path):
    cfg = _config(boundary={"values": 0.3})
    trace = tmp_path / "trace.jsonl"
    c1, _, o1 = _run(tmp_path, cfg, "--threads", "2", "--trace", str(trace), name="a")
    c2, _, o2 = _run(tmp_path, cfg, "--threads", "2", name="b")
    assert c1 == c2 == 0
    assert (o1 / "report.json").read_bytes() == (o2 / "report.json").read_bytes()
    lines = trace.read_text().splitlines()
    assert lines and all("residual" in json.loads(x) for x in lines)
