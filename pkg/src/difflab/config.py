"""Experiment configuration: JSON schema, loading and object construction."""

import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .perturb import (DISTRIBUTIONS, IID, ShellMixing, LatticeField, StationaryCP, ConfigurationError)
from .pointset import (Lattice, Window, CutProjectScheme, DeformationSpec, fibonacci_scheme,
                       generate_lattice, generate_cut_and_project, generate_visible_points,
                       generate_deformed_lattice)
from .spectral import FrequencySet

ANALYSES = ["spectrum", "recover", "gamma", "escape", "strungaru", "structure", "hellinger", "slln", "density"]

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}

SCHEMA = {
    "type": "object",
    "required": ["generator", "R_schedule", "analyses"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "criterion": {"type": "integer", "minimum": 1, "maximum": 13},
        "generator": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["lattice", "cut_and_project", "visible", "deformed_lattice"]},
                "dim": {"type": "integer", "minimum": 1},
                "basis": _matrix,
                "scheme": {"oneOf": [{"const": "fibonacci"}, {"type": "object"}]},
                "deformation": {"type": "object"},
                "margin": {"type": "number", "minimum": 0},
                "cap": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "model": {
            "type": "object",
            "required": ["variant", "dist"],
            "properties": {
                "variant": {"enum": ["iid", "shell_mixing", "lattice_field", "stationary_cp"]},
                "dist": {"type": "object", "required": ["law"],
                         "properties": {"law": {"enum": sorted(DISTRIBUTIONS)}}},
                "seed": {"type": "integer"},
                "shells": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "coupling": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "kernel": {"enum": ["ar", "gaussian"]},
                "rho": {"type": "number"},
                "correlation_length": {"type": "number", "minimum": 0},
            },
        },
        "frequencies": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["explicit", "dual_lattice", "uniform_grid", "dual_module"]},
                "values": _matrix,
                "max_norm": {"type": "number", "exclusiveMinimum": 0},
                "extent": {"type": "number", "exclusiveMinimum": 0},
                "step": {"type": "number", "exclusiveMinimum": 0},
                "strongest": {"type": "integer", "minimum": 1},
                "intensity_floor": {"type": "number", "exclusiveMinimum": 0},
                "half_space": {"type": "boolean"},
            },
        },
        "R_schedule": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "analyses": {"type": "array", "minItems": 1, "items": {"enum": ANALYSES}},
        "out": {"type": "string"},
        "cloak_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "threads": {"type": "integer", "minimum": 1},
        "plot": {"type": "boolean"},
        "params": {"type": "object"},
    },
    "additionalProperties": False,
}


class ConfigError(ConfigurationError):
    pass


def _locate(text, path):
    """Best-effort line number of the last key on ``path`` inside the JSON text."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def validate(cfg, text=None):
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        if e.validator == "required":
            missing = e.message.split("'")[1]
            where = f"{where}/{missing}" if e.path else missing
        line = _locate(text, list(e.path)) if text else None
        suffix = f" (line {line})" if line else ""
        raise ConfigError(f"config field '{where}'{suffix}: {e.message}")
    r = cfg["R_schedule"]
    if any(b <= a for a, b in zip(r, r[1:])):
        raise ConfigError("config field 'R_schedule': radii must be strictly increasing")
    stochastic = {"recover", "gamma", "escape", "strungaru", "structure", "hellinger", "slln"}
    if "model" in cfg and stochastic & set(cfg["analyses"]) and not cfg.get("seeds"):
        raise ConfigError("config field 'seeds': stochastic analyses need at least one seed")
    return cfg


def preset_path(name):
    return resources.files("difflab") / "presets" / (name if name.endswith(".json") else name + ".json")


def preset_names():
    return sorted(p.name[:-5] for p in (resources.files("difflab") / "presets").iterdir()
                  if p.name.endswith(".json"))


def load(path_or_name):
    p = Path(path_or_name)
    if not p.exists():
        q = preset_path(str(path_or_name))
        if not q.is_file():
            raise FileNotFoundError(f"no config file or preset named {path_or_name!r}")
        text = q.read_text()
    else:
        text = p.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from None
    return validate(cfg, text)


def canonical(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg):
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()


# ---------------------------------------------------------------- builders

def build_scheme(spec):
    if spec == "fibonacci":
        return fibonacci_scheme()
    w = spec["window"]
    window = Window.box(w["lower"], w["upper"]) if w.get("kind", "box") == "box" else \
        Window.ball(w["center"], w["radius"])
    return CutProjectScheme(np.array(spec["lattice_basis"], float), np.array(spec["proj_phys"], float),
                            np.array(spec["proj_int"], float), window, spec.get("name", "custom"))


def build_lattice(gen):
    if "basis" in gen:
        return Lattice(np.array(gen["basis"], float))
    return Lattice.integer(gen.get("dim", 2))


def build_deformation(gen):
    d = gen.get("deformation", {})
    dim = gen.get("dim", 2)
    return DeformationSpec(np.array(d.get("linear_part", np.eye(dim).tolist()), float),
                           d.get("decay_amplitude", 0.0), d.get("decay_exponent", 1.0), d.get("direction_seed", 0))


def generate(gen, R):
    kind = gen["kind"]
    cap = gen.get("cap", 1e7)
    if kind == "lattice":
        return generate_lattice(build_lattice(gen), R, cap)
    if kind == "cut_and_project":
        return generate_cut_and_project(build_scheme(gen.get("scheme", "fibonacci")), R, cap)
    if kind == "visible":
        return generate_visible_points(gen.get("dim", 2), R, cap)
    return generate_deformed_lattice(build_lattice(gen), build_deformation(gen), R, cap)


def build_dist(spec, dim):
    spec = dict(spec)
    law = spec.pop("law")
    cls = DISTRIBUTIONS[law]
    if law == "dirac0":
        return cls(dim)
    if law == "heavy_tail" and "scale" in spec:
        spec["scale_"] = spec.pop("scale")
    spec = {k: tuple(v) if isinstance(v, list) else v for k, v in spec.items()}
    return cls(dim=dim, **spec)


def build_model(spec, dim, seed=None, gen=None):
    if spec is None:
        return None
    dist = build_dist(spec["dist"], dim)
    seed = spec.get("seed", 0) if seed is None else seed
    v = spec["variant"]
    if v == "iid":
        return IID(dist, seed)
    if v == "shell_mixing":
        return ShellMixing(dist, tuple(spec["shells"]), spec.get("coupling", 0.0), seed)
    if v == "lattice_field":
        return LatticeField(dist, spec.get("kernel", "ar"), spec.get("rho", 0.5),
                            spec.get("correlation_length", 1.0), seed)
    scheme = build_scheme((gen or {}).get("scheme", "fibonacci"))
    return StationaryCP(scheme, dist, spec.get("correlation_length", 0.0), seed)


def build_frequencies(spec, gen):
    kind = spec["kind"]
    if kind == "explicit":
        return FrequencySet.explicit(spec["values"])
    if kind == "uniform_grid":
        return FrequencySet.uniform_grid(spec["extent"], spec["step"], gen.get("dim", 2))
    if kind == "dual_lattice":
        return FrequencySet.dual_lattice(build_lattice(gen), spec["max_norm"])
    fs = FrequencySet.dual_module(build_scheme(gen.get("scheme", "fibonacci")), spec["max_norm"],
                                  spec.get("intensity_floor", 1e-2))
    if "strongest" in spec:
        fs = fs.strongest(spec["strongest"], half_space=spec.get("half_space", False))
    return fs
