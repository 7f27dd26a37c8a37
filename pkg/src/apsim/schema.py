"""JSON schemas for experiment configs.

A config is validated in two passes: the common header (``kind``) first,
then the kind-specific schema, which rejects unknown fields.
"""
import copy

import jsonschema

__all__ = ["KINDS", "MATRIX", "schema_for", "validate_config", "ConfigError"]

KINDS = ("spectrum", "eliminate", "diamond", "simulate", "sweep", "cavity",
         "kinetic", "resources")


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}


def _grid(min_items=4):
    return {"type": "array", "items": _pos, "minItems": min_items}


MATRIX = {
    "type": "object",
    "required": ["rows", "cols", "re", "im"],
    "additionalProperties": False,
    "properties": {
        "rows": _posint, "cols": _posint,
        "re": {"type": "array", "items": {"type": "array", "items": _num}},
        "im": {"type": "array", "items": {"type": "array", "items": _num}},
    },
}

GENERATOR = {
    "oneOf": [
        {"type": "object", "required": ["superop"], "additionalProperties": False,
         "properties": {"superop": {"$ref": "#/$defs/matrix"}}},
        {"type": "object", "required": ["hamiltonian"], "additionalProperties": False,
         "properties": {"hamiltonian": {"$ref": "#/$defs/matrix"},
                        "jumps": {"type": "array", "items": {"$ref": "#/$defs/matrix"}}}},
    ]
}


def _obj(props, required=()):
    return {"type": "object", "additionalProperties": False,
            "required": list(required), "properties": props}


_cavity_params = {"omega_q": _num, "g": _pos, "kappa": _pos, "n_max": {"type": "integer", "minimum": 2}}

STIFF_MODEL = {
    "oneOf": [
        _obj({"type": {"const": "cavity"}, **_cavity_params}, ["type"]),
        _obj({"type": {"const": "random"}, "d_fast": _posint, "d_slow": _posint,
              "epsilon": _pos, "seed": _nonneg_int, "slow_scale": _pos}, ["type"]),
        _obj({"type": {"const": "commuting"}, "d": _posint, "epsilon": _pos}, ["type"]),
        _obj({"type": {"const": "explicit"}, "fast": {"$ref": "#/$defs/generator"},
              "slow": {"$ref": "#/$defs/generator"}, "epsilon": _pos,
              "split": _obj({"d_fast": _posint, "d_slow": _posint,
                             "fast_state": {"$ref": "#/$defs/matrix"}},
                            ["d_fast", "d_slow", "fast_state"])},
             ["type", "fast", "slow", "epsilon"]),
    ]
}

GEN_MODEL = {
    "oneOf": [
        _obj({"type": {"const": "cavity-fast"}, "kappa": _pos,
              "n_max": {"type": "integer", "minimum": 2}}, ["type"]),
        _obj({"type": {"const": "depolarizing"}, "d": _posint, "gamma": _pos}, ["type"]),
        _obj({"type": {"const": "random"}, "d": _posint, "seed": _nonneg_int}, ["type"]),
        _obj({"type": {"const": "explicit"}, "generator": {"$ref": "#/$defs/generator"}},
             ["type", "generator"]),
    ]
}

_common = {
    "kind": {"enum": list(KINDS)},
    "name": {"type": "string"},
    "description": {"type": "string"},
    "seed": _nonneg_int,
    "threads": _posint,
    "output": {"type": "string"},
}

_modes = {"enum": ["standard-trotter", "layered-analog", "layered-digital", "effective-only"]}
_norms = {"enum": ["induced", "diamond"]}
_cells = {"type": "array", "items": {"type": "array", "items": _nonneg_int,
                                     "minItems": 2, "maxItems": 2}}

_stiffness = _obj({"eps_grid": _grid(), "delta": _pos, "t_final": _pos,
                   "accounting": {"enum": ["certified", "global"]},
                   "order": {"enum": [1, 2]}, "extra_accounting": {"type": "boolean"}})
_certificate = _obj({"dt_norm_products": {"type": "array", "items": _pos, "minItems": 1},
                     "commuting_check": {"type": "boolean"},
                     "max_iter": _posint, "rtol": _pos})
_ap_sweep = _obj({"eps_grid": _grid(), "dt_factors": _grid(), "dt_grid": _grid(),
                  "diamond_cells": _cells, "c": _posint})

KIND_PROPS = {
    "spectrum": ({"model": GEN_MODEL, "norm": _norms, "n_points": {"type": "integer", "minimum": 2},
                  "drazin_check": {"type": "boolean"}, "decay_fit": {"type": "boolean"},
                  "expect": _obj({"gap": _pos, "kernel_dim": _posint})}, ["model"]),
    "eliminate": ({"model": STIFF_MODEL, "eps_grid": _grid(), "t_final": _pos}, ["model"]),
    "diamond": ({"maps": {"type": "array", "minItems": 1,
                          "items": _obj({"a": {"$ref": "#/$defs/matrix"},
                                         "b": {"$ref": "#/$defs/matrix"},
                                         "label": {"type": "string"}}, ["a"])},
                 "properties": _obj({"n_channels": _posint, "d_max": {"type": "integer", "minimum": 2, "maximum": 4},
                                     "n_pairs": _posint, "ancilla": _posint}),
                 "phase_flip": _obj({"p": {"type": "number", "minimum": 0, "maximum": 1}}),
                 "max_iter": _posint, "rtol": _pos, "require_converged": {"type": "boolean"}}, []),
    "simulate": ({"model": STIFF_MODEL, "mode": _modes, "dt": _pos, "total_time": _pos,
                  "fast_substep": _pos, "fast_order": _posint, "slow_order": {"enum": [1, 2]},
                  "initial_state": {"$ref": "#/$defs/matrix"},
                  "stiffness": _stiffness, "certificate": _certificate}, ["model"]),
    "sweep": ({"model": STIFF_MODEL, "mode": _modes, "norm": _norms,
               "eps_grid": _grid(), "dt_grid": _grid(), "dt_factors": _grid(),
               "diamond_cells": _cells, "slow_order": {"enum": [1, 2]},
               "fast_substep": _pos, "fast_order": _posint}, ["model", "eps_grid"]),
    "cavity": ({**_cavity_params, "cutoff_step": _posint,
                "tasks": {"type": "array", "minItems": 1, "uniqueItems": True,
                          "items": {"enum": ["spectrum", "purcell", "ap_sweep"]}},
                "ap_sweep": _ap_sweep}, []),
    "kinetic": ({"nx": {"type": "integer", "minimum": 8}, "eps_grid": _grid(), "dt_grid": _grid(),
                 "t_final": _pos, "velocities": {"enum": ["two", "gh8"]},
                 "initial_data": {"enum": ["equilibrium", "perturbed"]}, "nu0": {"type": "number", "minimum": 0},
                 "ref_refine": _posint, "diagram_eps": _grid()}, []),
    "resources": ({"kappa_grid": {"type": "array", "items": _pos, "minItems": 1},
                   "d_fast_grid": {"type": "array", "items": _posint, "minItems": 1},
                   "c_grid": {"type": "array", "items": _posint, "minItems": 1},
                   "d_slow": _posint, "t_final": _pos,
                   "delta": {"type": "string", "pattern": r"^[0-9]+(/[0-9]+)?$"},
                   "poly_delta_exponent": _nonneg_int}, []),
}


def schema_for(kind):
    """Full JSON schema for one config kind."""
    if kind not in KIND_PROPS:
        raise ConfigError(f"unknown kind {kind!r}")
    props, req = KIND_PROPS[kind]
    s = {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "additionalProperties": False,
        "required": ["kind"] + list(req),
        "properties": {**copy.deepcopy(_common), **copy.deepcopy(props)},
        "$defs": {"matrix": MATRIX, "generator": GENERATOR},
    }
    s["properties"]["kind"] = {"const": kind}
    return s


def validate_config(cfg):
    """Raise :class:`ConfigError` with a readable message if ``cfg`` is invalid."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"'kind' must be one of {', '.join(KINDS)}; got {kind!r}")
    v = jsonschema.Draft202012Validator(schema_for(kind))
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors[:5]:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{where}: {e.message}")
        raise ConfigError("; ".join(msgs))
    if kind == "sweep" and not ("dt_grid" in cfg or "dt_factors" in cfg):
        raise ConfigError("sweep needs dt_grid or dt_factors")
    if kind == "diamond" and not any(k in cfg for k in ("maps", "properties", "phase_flip")):
        raise ConfigError("diamond needs at least one of maps, properties, phase_flip")
    return cfg
