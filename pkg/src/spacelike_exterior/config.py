"""Run configuration: JSON file with domain, boundary, curvature, solver and output sections."""

import copy
import json

import jsonschema

from .errors import ConfigInvalid

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 3}
_EXPR = {"type": "string", "minLength": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "boundary"],
    "properties": {
        "mode": {"enum": ["check", "solve", "oracle-compare"]},
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dimension", "obstacles", "R_far", "h_grid"],
            "properties": {
                "dimension": {"type": "integer", "minimum": 3},
                "R_far": _POS,
                "h_grid": _POS,
                "obstacles": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "oneOf": [
                            {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["type", "center", "radius"],
                                "properties": {"type": {"const": "ball"}, "center": _VEC, "radius": _POS},
                            },
                            {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["type", "lo", "hi"],
                                "properties": {"type": {"const": "box"}, "lo": _VEC, "hi": _VEC},
                            },
                        ]
                    },
                },
            },
        },
        "boundary": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "expression", "table"]},
                "values": {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]},
                "expression": {"oneOf": [_EXPR, {"type": "array", "items": _EXPR, "minItems": 1}]},
                "points": {"type": "array", "items": _VEC, "minItems": 1},
                "samples": {"type": "integer", "minimum": 10},
                "margin": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
        },
        "curvature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "form": {"enum": ["zero", "x-only", "separable", "general"]},
                "H": _EXPR,
                "f": _EXPR,
                "g": _EXPR,
                "envelope": _EXPR,
                "s": {"type": "number", "minimum": 1},
                "nondecreasing": {"type": "boolean"},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iterations": {"type": "integer", "minimum": 1},
                "tol_E": _POS,
                "tol_g": _POS,
                "delta_floor": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "alpha0": _POS,
                "accelerate": {"type": "boolean"},
                "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "metric": {"type": "boolean"},
                "blend": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "field": {"type": "boolean"},
                "csv": {"type": "boolean"},
                "trace": {"type": ["string", "null"]},
                "residual_trials": {"type": "integer", "minimum": 0},
                "decay_fraction": {"type": "number", "exclusiveMinimum": 0},
                "oracle_tolerance": _POS,
            },
        },
    },
}

DEFAULTS = {
    "mode": "solve",
    "boundary": {"samples": 64, "margin": 0.05},
    "curvature": {"form": "zero"},
    "solver": {},
    "output": {
        "dir": "out",
        "field": True,
        "csv": True,
        "trace": None,
        "residual_trials": 20,
        "decay_fraction": 0.1,
        "oracle_tolerance": 0.02,
    },
}


def _path(error):
    parts = []
    for p in error.absolute_path:
        if isinstance(p, int):
            parts[-1] = f"{parts[-1]}[{p}]" if parts else f"[{p}]"
        else:
            parts.append(str(p))
    return ".".join(parts) or "<root>"


def parse_config(text):
    """Validate JSON text and fill defaults; raises ConfigInvalid with a location."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigInvalid(err.message, _path(err))
    cfg = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if isinstance(val, dict):
            cfg.setdefault(key, {}).update(val)
        else:
            cfg[key] = val
    _check_consistency(cfg)
    return cfg


def _check_consistency(cfg):
    n = cfg["domain"]["dimension"]
    for i, ob in enumerate(cfg["domain"]["obstacles"]):
        for key in ("center", "lo", "hi"):
            if key in ob and len(ob[key]) != n:
                raise ConfigInvalid(f"expected {n} coordinates", f"domain.obstacles[{i}].{key}")
        if ob["type"] == "box" and any(a >= b for a, b in zip(ob["lo"], ob["hi"])):
            raise ConfigInvalid("box needs lo < hi in every coordinate", f"domain.obstacles[{i}]")
    b = cfg["boundary"]
    need = {"constant": "values", "expression": "expression", "table": "values"}[b["kind"]]
    if need not in b:
        raise ConfigInvalid(f"'{need}' is required for kind '{b['kind']}'", "boundary")
    if b["kind"] == "table":
        if "points" not in b:
            raise ConfigInvalid("'points' is required for kind 'table'", "boundary")
        vals = b["values"] if isinstance(b["values"], list) else [b["values"]]
        if len(vals) != len(b["points"]):
            raise ConfigInvalid("points and values differ in length", "boundary.values")
        for i, p in enumerate(b["points"]):
            if len(p) != n:
                raise ConfigInvalid(f"expected {n} coordinates", f"boundary.points[{i}]")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid(str(exc), str(path)) from None
    return parse_config(text)
