"""Run-configuration schema, validation and construction of domain objects."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import spectral as sp
from .errors import ConfigError
from .integrator import StepConfig, grid_index
from .model import ForcingSpec, ModelParams
from .pullback import UniverseSpec
from .snapshot import read_snapshot

ENSEMBLE_KINDS = ("pullback", "semicontinuity", "compare-universes")
EXPERIMENT_KINDS = ("simulate", "verify", "pullback", "dimension", "semicontinuity",
                    "compare-universes")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_nums = {"type": "array", "items": _num, "minItems": 1}


def _obj(props, required=(), **extra):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False, **extra}


FIELD = {
    "oneOf": [
        _obj({"kind": {"const": "zero"}}, ["kind"]),
        _obj({"kind": {"const": "random"}, "energy": _nonneg, "kmax": _pos, "slope": _num,
              "stream": {"type": "integer", "minimum": 0}}, ["kind"]),
        _obj({"kind": {"const": "shear"}, "amplitude": _num,
              "direction": {"enum": [0, 1, 2]}, "component": {"enum": [0, 1, 2]},
              "wavenumber": _posint}, ["kind"]),
        _obj({"kind": {"const": "kolmogorov"}, "amplitude": _num, "wavenumber": _posint}, ["kind"]),
        _obj({"kind": {"const": "snapshot"}, "path": {"type": "string"}}, ["kind", "path"]),
    ]
}

_FORCING_BRANCHES = [
    _obj({"kind": {"const": "zero"}}, ["kind"]),
    _obj({"kind": {"const": "steady"}, "g": FIELD}, ["kind", "g"]),
    _obj({"kind": {"const": "tempered_exp"}, "sigma": _pos, "g": FIELD}, ["kind", "sigma", "g"]),
    _obj({"kind": {"const": "quasi_periodic"}, "omegas": _nums,
          "gs": {"type": "array", "items": FIELD, "minItems": 1}}, ["kind", "omegas", "gs"]),
]
FORCING = {
    "oneOf": _FORCING_BRANCHES + [
        _obj({"kind": {"const": "eps_scaled"}, "eps": _nonneg,
              "inner": {"oneOf": _FORCING_BRANCHES}}, ["kind", "eps", "inner"]),
    ]
}

UNIVERSE = {
    "oneOf": [
        _obj({"kind": {"const": "fixed_bounded"}, "radius": _pos}, ["kind", "radius"]),
        _obj({"kind": {"const": "tempered"}, "mu": _pos,
              "family": {"enum": ["constant", "polynomial", "subexp"]},
              "c": _pos, "p": _nonneg, "alpha": _nonneg}, ["kind", "mu"]),
    ]
}

_schedule = {"type": "array", "items": _num, "minItems": 1}

EXPERIMENT = {
    "oneOf": [
        _obj({"kind": {"const": "simulate"}, "tau": _num, "t_end": _num}, ["kind", "tau", "t_end"]),
        _obj({"kind": {"const": "verify"}, "tau": _num, "t_end": _num, "mu": _pos,
              "checks": {"type": "array", "items": {"enum": ["energy", "decay", "absorbing",
                                                             "time_avg", "tail"]}},
              "windows": _nums, "tail_m": {"type": "integer", "minimum": 0},
              "tail_eps": _pos, "tail_from": _num}, ["kind", "tau", "t_end"]),
        _obj({"kind": {"const": "pullback"}, "t": _num, "tau_schedule": _schedule,
              "universe": UNIVERSE, "n_members": _posint, "tol": _pos,
              "norm": {"enum": ["H", "frac14"]}, "direction_kmax": _pos,
              "threshold_c": _pos, "grashof_window": _pos, "persist_cloud": {"type": "boolean"}},
             ["kind", "t", "tau_schedule", "universe"]),
        _obj({"kind": {"const": "dimension"}, "tau": _num, "burn_in": _nonneg, "horizon": _pos,
              "n": _posint, "variant": {"enum": ["paper_operator", "full_gateaux"]},
              "reorth_interval": _posint, "init": {"enum": ["stokes", "random"]},
              "C": _num, "C_F": _num, "window": _pos,
              "rtol": _pos, "n_max": _posint,
              "differentiability": _obj({"t": _num, "deltas": _nums}, ["t", "deltas"])},
             ["kind", "tau", "horizon", "n"]),
        _obj({"kind": {"const": "semicontinuity"}, "t": _num, "eps_list": _nums,
              "tau_schedule": _schedule, "n_members": _posint, "tol": _pos,
              "universe": UNIVERSE,
              "vw": _obj({"tau": _num, "eps": _nonneg}, ["tau"])},
             ["kind", "t", "eps_list", "tau_schedule"]),
        _obj({"kind": {"const": "compare-universes"}, "t": _num, "tau_schedule": _schedule,
              "universes": {"type": "array", "items": UNIVERSE, "minItems": 3, "maxItems": 3},
              "n_members": _posint, "tol": _pos},
             ["kind", "t", "tau_schedule", "universes"]),
    ]
}

SCHEMA = _obj(
    {
        "model": _obj({"nu": _pos, "nu0": _nonneg}, ["nu", "nu0"]),
        "lattice": _obj({"n": {"type": "integer", "minimum": 4, "multipleOf": 2},
                         "dealias_cut": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
                        ["n"]),
        "forcing": FORCING,
        "initial": FIELD,
        "integrator": _obj({"dt": _pos, "scheme": {"enum": ["etd2", "imex_cn_ab2"]},
                            "nonlinear_viscosity_mode": {"enum": ["explicit_coeff", "picard"]},
                            "picard_max_iter": _posint, "picard_tol": _pos,
                            "cfl_safety": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
                           ["dt"]),
        "output": _obj({"dir": {"type": "string"}, "sample_every": _posint,
                        "snapshot_every": {"type": "integer", "minimum": 0}}),
        "experiment": EXPERIMENT,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    },
    ["model", "lattice", "forcing", "integrator", "experiment"],
)


_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def _best_error(err):
    """Follow oneOf failures into the branch selected by the instance's kind."""
    if err.validator != "oneOf" or not err.context:
        return err
    kind = err.instance.get("kind") if isinstance(err.instance, dict) else None
    for sub in err.context:
        branch = err.schema["oneOf"][sub.schema_path[0]]
        if branch.get("properties", {}).get("kind", {}).get("const") == kind:
            return _best_error(sub)
    return err


def validate(cfg):
    """Schema and semantic validation; raises ConfigError naming the field."""
    errors = list(_VALIDATOR.iter_errors(cfg))
    if errors:
        best = _best_error(min(errors, key=lambda e: [str(x) for x in e.absolute_path]))
        raise ConfigError(f"{_path(best)}: {best.message}")
    kind = cfg["experiment"]["kind"]
    if kind in ENSEMBLE_KINDS and "seed" not in cfg:
        raise ConfigError(f"seed: required for ensemble experiment {kind!r}")
    if _uses_random(cfg) and "seed" not in cfg:
        raise ConfigError("seed: required when random fields are configured")
    try:
        build(cfg, check_only=True)
    except ConfigError:
        raise
    except (ValueError, OSError) as e:
        raise ConfigError(str(e)) from None
    return cfg


def _uses_random(obj):
    if isinstance(obj, dict):
        if obj.get("kind") == "random":
            return True
        return any(_uses_random(v) for v in obj.values())
    if isinstance(obj, list):
        return any(_uses_random(v) for v in obj)
    return False


def load(path, seed=None):
    """Read, optionally override the seed, and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    digest = hashlib.sha256(text.encode()).hexdigest()
    if seed is not None:
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg = dict(cfg, seed=seed)
        digest += f"+seed={seed}"
    return validate(cfg), digest


def field_rng(seed, stream):
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[1, int(stream), 0, 0]))


def build_field(spec, lat, seed, stream):
    k = spec["kind"]
    if k == "zero":
        return lat.zeros()
    if k == "random":
        rng = field_rng(seed, spec.get("stream", stream))
        return sp.random_field(lat, rng, spec.get("energy", 1.0), spec.get("kmax"), spec.get("slope", 0.0))
    if k == "shear":
        return sp.shear_mode(lat, spec.get("amplitude", 1.0), spec.get("direction", 0),
                             spec.get("component", 1), spec.get("wavenumber", 1))
    if k == "kolmogorov":
        return sp.kolmogorov_mode(lat, spec.get("amplitude", 1.0), spec.get("wavenumber", 1))
    if k == "snapshot":
        slat, uh = read_snapshot(spec["path"], lat.dealias_cut)
        if slat.n != lat.n:
            raise ConfigError(f"snapshot {spec['path']} has N={slat.n}, lattice has N={lat.n}")
        return uh
    raise ConfigError(f"unknown field kind {k!r}")


def build_forcing(spec, lat, seed, stream=100):
    k = spec["kind"]
    if k == "zero":
        return ForcingSpec.zero()
    if k == "steady":
        return ForcingSpec.steady(lat, build_field(spec["g"], lat, seed, stream))
    if k == "tempered_exp":
        return ForcingSpec.tempered_exp(lat, spec["sigma"], build_field(spec["g"], lat, seed, stream))
    if k == "quasi_periodic":
        if len(spec["omegas"]) != len(spec["gs"]):
            raise ConfigError("forcing.omegas and forcing.gs must have equal length")
        gs = [build_field(g, lat, seed, stream + j) for j, g in enumerate(spec["gs"])]
        return ForcingSpec.quasi_periodic(lat, spec["omegas"], gs)
    if k == "eps_scaled":
        return ForcingSpec.eps_scaled(spec["eps"], build_forcing(spec["inner"], lat, seed, stream))
    raise ConfigError(f"unknown forcing kind {k!r}")


def build_universe(spec):
    if spec["kind"] == "fixed_bounded":
        return UniverseSpec.fixed_bounded(spec["radius"])
    return UniverseSpec.tempered(spec["mu"], spec.get("family", "constant"), spec.get("c", 1.0),
                                 spec.get("p", 0.0), spec.get("alpha", 0.0))


@dataclass
class Run:
    raw: dict
    params: ModelParams
    forcing: ForcingSpec
    u0: np.ndarray
    step: StepConfig
    seed: int
    experiment: dict
    out_dir: str
    sample_every: int
    snapshot_every: int


def _check_grid(name, t, dt):
    try:
        grid_index(t, dt)
    except ValueError:
        raise ConfigError(f"{name}: {t!r} is not a multiple of integrator.dt={dt!r}") from None


def build(cfg, check_only=False):
    lat_cfg = cfg["lattice"]
    lat = sp.WaveLattice(lat_cfg["n"], lat_cfg.get("dealias_cut", 2.0 / 3.0))
    m = cfg["model"]
    params = ModelParams(m["nu"], m["nu0"], lat)
    seed = int(cfg.get("seed", 0))
    ic = cfg["integrator"]
    step = StepConfig(
        ic["dt"], ic.get("scheme", "etd2"), ic.get("nonlinear_viscosity_mode", "explicit_coeff"),
        ic.get("picard_max_iter", 20), ic.get("picard_tol", 1e-12), ic.get("cfl_safety", 1.0),
    )
    ex = cfg["experiment"]
    dt = step.dt
    for key in ("tau", "t", "t_end"):
        if key in ex:
            _check_grid(f"experiment.{key}", ex[key], dt)
    for key in ("burn_in", "horizon"):
        if key in ex:
            _check_grid(f"experiment.{key}", ex[key], dt)
    for j, tau in enumerate(ex.get("tau_schedule", [])):
        _check_grid(f"experiment.tau_schedule.{j}", tau, dt)
        if tau >= ex["t"]:
            raise ConfigError(f"experiment.tau_schedule.{j}: pullback time must precede t")
    if "tau_schedule" in ex and any(b >= a for a, b in zip(ex["tau_schedule"], ex["tau_schedule"][1:])):
        raise ConfigError("experiment.tau_schedule: must be strictly decreasing")
    if "eps_list" in ex and any(b >= a for a, b in zip(ex["eps_list"], ex["eps_list"][1:])):
        raise ConfigError("experiment.eps_list: must be strictly decreasing")
    if "t_end" in ex and not ex["t_end"] > ex["tau"]:
        raise ConfigError("experiment.t_end: must exceed experiment.tau")
    for key in ("universe",):
        if key in ex:
            try:
                build_universe(ex[key])
            except ValueError as e:
                raise ConfigError(f"experiment.{key}: {e}") from None
    for j, u in enumerate(ex.get("universes", [])):
        try:
            build_universe(u)
        except ValueError as e:
            raise ConfigError(f"experiment.universes.{j}: {e}") from None
    if ex["kind"] == "dimension":
        if step.scheme != "etd2":
            raise ConfigError("integrator.scheme: tangent propagation needs etd2")
        if step.nonlinear_viscosity_mode != "explicit_coeff":
            raise ConfigError("integrator.nonlinear_viscosity_mode: tangent propagation needs explicit_coeff")
        from .dimension import max_tangents
        if ex["n"] > max_tangents(lat):
            raise ConfigError(f"experiment.n: at most {max_tangents(lat)} tangents on this lattice")
    if ex["kind"] == "semicontinuity" and step.scheme != "etd2" and "vw" in ex:
        raise ConfigError("integrator.scheme: the v/w decomposition needs etd2")
    if check_only and cfg.get("initial", {}).get("kind") == "snapshot":
        if not Path(cfg["initial"]["path"]).exists():
            raise ConfigError(f"initial.path: snapshot {cfg['initial']['path']} does not exist")
    if check_only:
        return None
    try:
        forcing = build_forcing(cfg["forcing"], lat, seed)
    except ValueError as e:
        raise ConfigError(f"forcing: {e}") from None
    u0 = build_field(cfg.get("initial", {"kind": "zero"}), lat, seed, 0)
    out = cfg.get("output", {})
    return Run(cfg, params, forcing, u0, step, seed, ex, out.get("dir", "out"),
               out.get("sample_every", 1), out.get("snapshot_every", 0))
