"""Experiment configuration: JSON schema, semantic checks and object builders."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from concavex.euler import CONCAVITY_TOL, DEFAULT_TOL
from concavex.hlp import RATIO_MARGIN
from concavex.shocks import PROB_TOL, HLPParameters, ShockDistribution
from concavex.utility import HARA_TOL, UtilityFunction, make_utility

COMMANDS = ("solve", "scan", "horizon", "classify", "counterexample", "gcheck")

_POS = {"type": "number", "exclusiveMinimum": 0}
_NUM = {"type": "number"}
_RANGE = {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "utility": {
            "type": "object",
            "required": ["family"],
            "properties": {
                "family": {"enum": ["crra", "cara", "hara", "quadratic", "mixture"]},
                "gamma": _POS,
                "alpha": _POS,
                "a": {"type": "number", "exclusiveMinimum": -1},
                "b": _NUM,
                "bliss": _NUM,
                "scale": _POS,
                "weights": {"type": "array", "items": _POS, "minItems": 1},
                "exponents": {"type": "array", "items": _POS, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "shocks": {
            "type": "object",
            "oneOf": [{"required": ["states"]}, {"required": ["random"]}],
            "properties": {
                "states": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["pi", "beta", "R", "Y"],
                        "properties": {"pi": _POS, "beta": _POS, "R": _POS, "Y": _POS},
                        "additionalProperties": False,
                    },
                },
                "random": {
                    "type": "object",
                    "required": ["n_states"],
                    "properties": {
                        "n_states": {"type": "integer", "minimum": 1},
                        "beta": _RANGE,
                        "R": _RANGE,
                        "Y": _RANGE,
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "hlp": {
            "type": "object",
            "required": ["p", "x", "v"],
            "properties": {
                "p": {"type": "array", "items": _POS, "minItems": 1},
                "x": {"type": "array", "items": _NUM, "minItems": 1},
                "v": {"type": "array", "items": _POS, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "required": ["lo", "hi", "points"],
            "properties": {
                "lo": _NUM,
                "hi": _NUM,
                "points": {"type": "integer"},
                "spacing": {"enum": ["linear", "log"]},
            },
            "additionalProperties": False,
        },
        "horizon": {"type": "integer", "minimum": 1},
        "tolerances": {
            "type": "object",
            "properties": {"solver": _POS, "concavity": _POS, "hara": _POS, "ratio_margin": _POS},
            "additionalProperties": False,
        },
        "pipeline": {
            "type": "object",
            "properties": {
                "window_ratio": {"type": "number", "exclusiveMinimum": 1},
                "scan_points": {"type": "integer", "minimum": 3},
                "k": {"type": "number", "exclusiveMaximum": 0},
                "shifted_domain": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

_NEEDS = {
    "solve": ("utility", "shocks", "grid"),
    "scan": ("utility", "shocks", "grid"),
    "horizon": ("utility", "shocks", "grid", "horizon"),
    "classify": ("utility",),
    "counterexample": ("utility",),
    "gcheck": ("utility",),
}


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _schema_message(err: jsonschema.ValidationError) -> str:
    where = _path(err.absolute_path)
    if err.validator == "exclusiveMinimum" and err.validator_value == 0:
        return f"{where}: must be strictly positive, got {err.instance!r}"
    return f"{where}: {err.message}"


def diagnostics(raw: Any, command: str | None = None) -> list[str]:
    """Full validation without execution; an empty list means valid."""
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    out = [_schema_message(e) for e in errors]
    if not isinstance(raw, dict):
        return out or ["<root>: config must be a JSON object"]
    command = command or raw.get("command")
    if command is not None:
        if command not in COMMANDS:
            out.append(f"command: unknown command {command!r}")
        else:
            if raw.get("command", command) != command:
                out.append(f"command: config says {raw['command']!r} but {command!r} was requested")
            for key in _NEEDS[command]:
                if key not in raw:
                    out.append(f"{key}: required for command {command!r}")
            if command == "gcheck" and "hlp" not in raw and "shocks" not in raw:
                out.append("hlp: gcheck needs either hlp or shocks")
    if out:
        return out

    states = raw.get("shocks", {}).get("states")
    if states:
        total = math.fsum(s["pi"] for s in states)
        if abs(total - 1.0) > PROB_TOL:
            out.append(f"shocks.states[].pi: probabilities must sum to 1, got {total!r}")
    rnd = raw.get("shocks", {}).get("random")
    if rnd:
        for key in ("beta", "R", "Y"):
            if key in rnd and not rnd[key][0] <= rnd[key][1]:
                out.append(f"shocks.random.{key}: range must be ordered (lo <= hi)")
    hlp = raw.get("hlp")
    if hlp and not len(hlp["p"]) == len(hlp["x"]) == len(hlp["v"]):
        out.append("hlp: p, x and v must have equal length")
    grid = raw.get("grid")
    if grid:
        if not grid["lo"] < grid["hi"]:
            out.append(f"grid: lo must be below hi, got lo={grid['lo']!r}, hi={grid['hi']!r}")
        if grid["points"] < 3:
            out.append(f"grid.points: at least 3 points are required, got {grid['points']}")
        if grid.get("spacing", "log") == "log" and not grid["lo"] > 0:
            out.append("grid.lo: log spacing needs a positive lower end")
    if "utility" in raw:
        try:
            make_utility(raw["utility"])
        except (ValueError, TypeError) as exc:
            out.append(f"utility: {exc}")
    return out


def validate(path: str | Path) -> list[str]:
    """Diagnostics for a config file on disk (raises OSError if unreadable)."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        return [f"<root>: invalid JSON ({exc.msg} at line {exc.lineno})"]
    return diagnostics(raw)


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class ExperimentConfig:
    command: str
    raw: dict[str, Any]
    seed: int = 0
    output: str = "."
    tolerances: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict[str, Any], command: str | None = None, seed: int | None = None,
                  tol: float | None = None, output: str | None = None) -> "ExperimentConfig":
        command = command or raw.get("command")
        if command is None:
            raise ConfigError(["command: no command given"])
        problems = diagnostics(raw, command)
        if problems:
            raise ConfigError(problems)
        tols = {"solver": DEFAULT_TOL, "concavity": CONCAVITY_TOL, "hara": HARA_TOL, "ratio_margin": RATIO_MARGIN}
        tols.update(raw.get("tolerances", {}))
        if tol is not None:
            tols["solver"] = tol
        return cls(
            command=command,
            raw=raw,
            seed=raw.get("seed", 0) if seed is None else seed,
            output=output or raw.get("output", "."),
            tolerances=tols,
        )

    @classmethod
    def load(cls, path: str | Path, **kwargs) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<root>: invalid JSON ({exc.msg} at line {exc.lineno})"]) from exc
        return cls.from_dict(raw, **kwargs)

    def utility(self) -> UtilityFunction:
        return make_utility(self.raw["utility"])

    def shocks(self) -> ShockDistribution:
        spec = self.raw["shocks"]
        if "states" in spec:
            return ShockDistribution.from_spec(spec)
        rnd = spec["random"]
        rng = np.random.default_rng(self.seed)
        ranges = {k: tuple(rnd[k]) for k in ("beta", "R", "Y") if k in rnd}
        return ShockDistribution.random(rng, rnd["n_states"], **ranges)

    def hlp(self) -> HLPParameters | None:
        return HLPParameters.from_spec(self.raw["hlp"]) if "hlp" in self.raw else None

    def grid(self) -> np.ndarray | None:
        g = self.raw.get("grid")
        if g is None:
            return None
        if g.get("spacing", "log") == "log":
            return np.geomspace(g["lo"], g["hi"], g["points"])
        return np.linspace(g["lo"], g["hi"], g["points"])

    @property
    def horizon(self) -> int:
        return int(self.raw["horizon"])

    @property
    def pipeline(self) -> dict[str, Any]:
        return dict(self.raw.get("pipeline", {}))
