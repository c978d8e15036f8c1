"""Experiment configuration: TOML (or JSON) parsing and validation.

A config file has three blocks.  ``[model]`` declares the switching chain:
state names, the embedded matrix P (row-major), and one sojourn spec per
state.  ``[impulse]`` declares the impulse family per state: catalog entries
for a1, a and c, jump atoms, optional weight modulation.  ``[run]`` holds
experiment parameters (eps ladder, horizon, path counts, seed, sigma^2
reading, output selection).

Structure is validated against a jsonschema; cross-block consistency (state
names, dimensions) is checked separately and reported as CrossRefError with
the offending field path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:
    import tomli as _toml

import jsonschema

from .errors import CrossRefError, ParseError, SchemaError
from .impulse import (
    Const,
    ImpulseFamily,
    JumpKernel,
    MatrixField,
    ScalarField,
    Sine,
    Tanh,
    VectorField,
)
from .limits import DEFAULT_SIGMA_READING, SigmaReading
from .switching import Deterministic, Exponential, Gamma, SemiMarkovModel, Uniform

__all__ = ["RunConfig", "ExperimentConfig", "parse_config", "CONFIG_SCHEMA"]


_FN_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["const", "tanh", "sine", "sine_offset"]},
        "value": {"type": "number"},
        "amp": {"type": "number"},
        "slope": {"type": "number"},
        "center": {"type": "number"},
        "freq": {"type": "number"},
        "phase": {"type": "number"},
        "base": {"type": "number"},
        "axis": {"type": "integer", "minimum": 0},
        "shift": {"type": "number"},
    },
    "additionalProperties": False,
}

_SOJOURN_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["exponential", "deterministic", "gamma", "uniform"]},
        "rate": {"type": "number", "exclusiveMinimum": 0},
        "value": {"type": "number", "exclusiveMinimum": 0},
        "shape": {"type": "number", "exclusiveMinimum": 0},
        "scale": {"type": "number", "exclusiveMinimum": 0},
        "lo": {"type": "number", "minimum": 0},
        "hi": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_STATE_IMPULSE_SCHEMA = {
    "type": "object",
    "required": ["a1", "a", "c"],
    "properties": {
        "a1": {"type": "array", "items": _FN_SCHEMA, "minItems": 1},
        "a": {"type": "array", "items": _FN_SCHEMA, "minItems": 1},
        "c": {"type": "array",
              "items": {"type": "array", "items": _FN_SCHEMA, "minItems": 1},
              "minItems": 1},
        "atoms": {"type": "array",
                  "items": {"type": "object",
                            "required": ["v", "w"],
                            "properties": {
                                "v": {"type": "array",
                                      "items": {"type": "number"}, "minItems": 1},
                                "w": {"type": "number", "exclusiveMinimum": 0}},
                            "additionalProperties": False}},
        "modulation": _FN_SCHEMA,
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model", "impulse", "run"],
    "properties": {
        "model": {
            "type": "object",
            "required": ["states", "P", "sojourn"],
            "properties": {
                "states": {"type": "array", "items": {"type": "string"},
                           "minItems": 1},
                "P": {"type": "array",
                      "items": {"type": "array", "items": {"type": "number"}},
                      "minItems": 1},
                "sojourn": {"type": "object",
                            "additionalProperties": _SOJOURN_SCHEMA},
            },
            "additionalProperties": False,
        },
        "impulse": {
            "type": "object",
            "required": ["dim", "state"],
            "properties": {
                "dim": {"type": "integer", "minimum": 1},
                "theta_scale": {"type": "number", "minimum": 0},
                "state": {"type": "object",
                          "additionalProperties": _STATE_IMPULSE_SCHEMA},
            },
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "properties": {
                "eps_list": {"type": "array",
                             "items": {"type": "number",
                                       "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                             "minItems": 1},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "n_time_grid": {"type": "integer", "minimum": 2},
                "n_paths": {"type": "integer", "minimum": 2},
                "u0": {"type": ["number", "array"]},
                "master_seed": {"type": "integer", "minimum": 0},
                "sigma_reading": {"enum": ["as_written", "p_averaged"]},
                "out_dir": {"type": "string"},
                "format": {"enum": ["csv", "json"]},
                "threads": {"type": "integer", "minimum": 1},
                "u_interval": {"type": "array", "items": {"type": "number"},
                               "minItems": 2, "maxItems": 2},
                "balance_grid_points": {"type": "integer", "minimum": 2},
                "init_dist": {"type": "string"},
                "w1_threshold": {"type": "number", "exclusiveMinimum": 0},
                "gencheck_eps": {"type": "array", "items": {"type": "number"}},
                "gencheck_paths": {"type": "integer", "minimum": 2},
                "arbitration_eps": {"type": "number", "exclusiveMinimum": 0},
                "arbitration_paths": {"type": "integer", "minimum": 2},
                "fidelity_draws": {"type": "integer", "minimum": 100},
                "taper_margin": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class RunConfig:
    """Run-block parameters with package defaults."""

    eps_list: tuple = (0.4, 0.2, 0.1, 0.05)
    horizon: float = 1.0
    n_time_grid: int = 33
    n_paths: int = 10_000
    u0: float = 0.0
    master_seed: int = 0
    sigma_reading: SigmaReading = DEFAULT_SIGMA_READING
    out_dir: str = "out"
    format: str = "csv"
    threads: int = 1
    u_interval: tuple = (-2.0, 3.0)
    balance_grid_points: int = 41
    init_dist: str = "pi"
    w1_threshold: float = 0.05
    gencheck_eps: tuple = (0.2, 0.1, 0.05)
    gencheck_paths: int = 100_000
    arbitration_eps: float = 0.02
    arbitration_paths: int = 100_000
    fidelity_draws: int = 1_000_000
    taper_margin: float = 1.5

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_time_grid)

    def balance_grid(self) -> np.ndarray:
        lo, hi = self.u_interval
        return np.linspace(lo, hi, self.balance_grid_points)

    def taper(self) -> tuple:
        lo, hi = self.u_interval
        return (lo, hi, self.taper_margin)


@dataclass(frozen=True)
class ExperimentConfig:
    model: SemiMarkovModel
    family: ImpulseFamily
    run: RunConfig
    raw: dict = field(repr=False, default_factory=dict)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _scalar_field(spec: dict, where: str) -> ScalarField:
    kind = spec["kind"]
    axis = int(spec.get("axis", 0))
    shift = float(spec.get("shift", 0.0))

    def need(*names):
        missing = [n for n in names if n not in spec]
        if missing:
            raise SchemaError(f"{where}: {kind} needs {', '.join(missing)}")

    if kind == "const":
        need("value")
        return ScalarField(Const(float(spec["value"])), axis, shift)
    if kind == "tanh":
        need("amp", "slope")
        return ScalarField(Tanh(float(spec["amp"]), float(spec["slope"]),
                                float(spec.get("center", 0.0))), axis, shift)
    if kind == "sine":
        need("amp", "freq")
        return ScalarField(Sine(float(spec["amp"]), float(spec["freq"]),
                                float(spec.get("phase", 0.0))), axis, shift)
    if kind == "sine_offset":
        need("base", "amp", "freq")
        return ScalarField(Sine(float(spec["amp"]), float(spec["freq"]),
                                float(spec.get("phase", 0.0))), axis,
                           shift + float(spec["base"]))
    raise SchemaError(f"{where}: unknown kind {kind!r}")


def _sojourn(spec: dict, where: str):
    kind = spec["kind"]
    try:
        if kind == "exponential":
            return Exponential(float(spec["rate"]))
        if kind == "deterministic":
            return Deterministic(float(spec["value"]))
        if kind == "gamma":
            return Gamma(float(spec["shape"]), float(spec["scale"]))
        if kind == "uniform":
            return Uniform(float(spec["lo"]), float(spec["hi"]))
    except KeyError as exc:
        raise SchemaError(f"{where}: {kind} sojourn is missing {exc.args[0]}") from exc
    raise SchemaError(f"{where}: unknown sojourn kind {kind!r}")


def _build_model(block: dict) -> SemiMarkovModel:
    states = tuple(block["states"])
    if len(set(states)) != len(states):
        raise CrossRefError("model.states: duplicate state names")
    P = block["P"]
    n = len(states)
    if len(P) != n:
        raise SchemaError(f"model.P: expected {n} rows, got {len(P)}")
    for i, row in enumerate(P):
        if len(row) != n:
            raise SchemaError(f"model.P[{i}]: expected {n} entries, got {len(row)}")
    sojourn = block["sojourn"]
    missing = [s for s in states if s not in sojourn]
    if missing:
        raise CrossRefError(f"model.sojourn: missing states {missing}")
    unknown = [s for s in sojourn if s not in states]
    if unknown:
        raise CrossRefError(f"model.sojourn: unknown states {unknown}")
    sojourns = tuple(_sojourn(sojourn[s], f"model.sojourn.{s}") for s in states)
    return SemiMarkovModel(states, np.array(P, dtype=float), sojourns)


def _build_family(block: dict, states: tuple) -> ImpulseFamily:
    dim = int(block["dim"])
    per_state = block["state"]
    unknown = [s for s in per_state if s not in states]
    if unknown:
        raise CrossRefError(f"impulse.state: unknown states {unknown}")
    missing = [s for s in states if s not in per_state]
    if missing:
        raise CrossRefError(f"impulse.state: missing states {missing}")

    a1, a, c, jumps = [], [], [], []
    for s in states:
        blk = per_state[s]
        where = f"impulse.state.{s}"
        for name in ("a1", "a"):
            if len(blk[name]) != dim:
                raise SchemaError(f"{where}.{name}: expected {dim} entries, "
                                  f"got {len(blk[name])}")
        a1.append(VectorField(tuple(_scalar_field(e, f"{where}.a1")
                                    for e in blk["a1"])))
        a.append(VectorField(tuple(_scalar_field(e, f"{where}.a")
                                   for e in blk["a"])))
        c_rows = blk["c"]
        if len(c_rows) != dim or any(len(r) != dim for r in c_rows):
            raise SchemaError(f"{where}.c: expected a {dim}x{dim} grid")
        c.append(MatrixField(tuple(tuple(_scalar_field(e, f"{where}.c")
                                         for e in row) for row in c_rows)))
        atoms = blk.get("atoms", [])
        locs = np.array([at["v"] for at in atoms], dtype=float).reshape(len(atoms), -1) \
            if atoms else np.zeros((0, dim))
        if atoms and locs.shape[1] != dim:
            raise SchemaError(f"{where}.atoms: atom vectors must have dim {dim}")
        weights = np.array([at["w"] for at in atoms], dtype=float)
        modulation = (_scalar_field(blk["modulation"], f"{where}.modulation")
                      if "modulation" in blk else None)
        jumps.append(JumpKernel(locs, weights, modulation))
    fam = ImpulseFamily(dim=dim, a1=tuple(a1), a=tuple(a), c=tuple(c),
                        jumps=tuple(jumps),
                        theta_scale=float(block.get("theta_scale", 0.0)))
    fam.check()
    return fam


def _build_run(block: dict, dim: int) -> RunConfig:
    kwargs = dict(block)
    if "eps_list" in kwargs:
        eps = [float(e) for e in kwargs["eps_list"]]
        if sorted(eps, reverse=True) != eps:
            raise SchemaError("run.eps_list must be strictly decreasing")
        kwargs["eps_list"] = tuple(eps)
    if "gencheck_eps" in kwargs:
        kwargs["gencheck_eps"] = tuple(float(e) for e in kwargs["gencheck_eps"])
    if "u_interval" in kwargs:
        lo, hi = kwargs["u_interval"]
        if not lo < hi:
            raise SchemaError("run.u_interval must be increasing")
        kwargs["u_interval"] = (float(lo), float(hi))
    if "sigma_reading" in kwargs:
        kwargs["sigma_reading"] = SigmaReading(kwargs["sigma_reading"])
    if "u0" in kwargs:
        u0 = kwargs["u0"]
        if isinstance(u0, list):
            if len(u0) != dim:
                raise CrossRefError(f"run.u0 has dim {len(u0)}, impulse dim is {dim}")
            kwargs["u0"] = tuple(float(v) for v in u0)
    run = RunConfig(**kwargs)
    if not math.isfinite(run.horizon):
        raise SchemaError("run.horizon must be finite")
    return run


def parse_config(path) -> ExperimentConfig:
    """Parse and validate a TOML or JSON experiment config.

    Raises ParseError (malformed file), SchemaError (structure/shape) or
    CrossRefError (inconsistent state references).
    """
    text = open(path, "rb").read()
    name = str(path)
    if name.endswith(".json"):
        try:
            raw = json.loads(text.decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{name}:{exc.lineno}: {exc.msg}") from exc
    else:
        try:
            raw = _toml.loads(text.decode("utf-8"))
        except _toml.TOMLDecodeError as exc:
            raise ParseError(f"{name}: {exc}") from exc

    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{loc}: {exc.message}") from exc

    model = _build_model(raw["model"])
    family = _build_family(raw["impulse"], model.states)
    run = _build_run(raw.get("run", {}), family.dim)
    if isinstance(run.u0, tuple) and len(run.u0) != family.dim:
        raise CrossRefError(f"run.u0 has dim {len(run.u0)}, impulse dim {family.dim}")
    return ExperimentConfig(model=model, family=family, run=run, raw=raw)
