"""JSON experiment configuration.

Schema (all keys optional unless stated)::

    {
      "scenario": "S2",                      # required
      "T_list": [500, 1000, 2000],           # required, strictly increasing
      "reps": 20,
      "bandwidth": {"constant": 0.5, "exponent": 0.1667},
      "grids": {"u_points": 41, "x_points": 41, "x_box": [-1.5, 1.5]},
      "seed": 0,
      "out_dir": "out/rates",
      "estimator": "nw" | "backfit",         # default follows the scenario
      "region": "common" | "per_T",
      "point": {"u": 0.5, "x": [0.0], "component": 1},
      "bias": "undersmooth" | "correct",
      "u_values": [0.25, 0.5, 0.75],
      "rho_grid": [0.25, 0.5, 1, 2],
      "data": "path/to/sample.csv"
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .scenarios import SCENARIOS


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        self.message = message
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class Bandwidth:
    constant: float
    exponent: float

    def __call__(self, T: int) -> float:
        return self.constant * T ** (-self.exponent)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    T_list: tuple[int, ...]
    reps: int = 1
    bandwidth: Bandwidth = Bandwidth(0.5, 1.0 / 6.0)
    u_points: int = 41
    x_points: int = 41
    x_box: tuple[float, float] | None = None
    seed: int = 0
    out_dir: str = "out"
    estimator: str | None = None
    region: str = "common"
    point_u: float = 0.5
    point_x: tuple[float, ...] = (0.0,)
    component: int = 1
    bias: str = "undersmooth"
    u_values: tuple[float, ...] = (0.25, 0.5, 0.75)
    rho_grid: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0)
    data: str | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else replace(self, seed=int(seed))

    def with_out_dir(self, out_dir: str | None) -> "ExperimentConfig":
        return self if out_dir is None else replace(self, out_dir=str(out_dir))

    @property
    def resolved_estimator(self) -> str:
        if self.estimator:
            return self.estimator
        return "backfit" if SCENARIOS[self.scenario].kind == "additive" else "nw"

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "T_list": list(self.T_list),
            "reps": self.reps,
            "bandwidth": {"constant": self.bandwidth.constant, "exponent": self.bandwidth.exponent},
            "grids": {
                "u_points": self.u_points,
                "x_points": self.x_points,
                "x_box": None if self.x_box is None else list(self.x_box),
            },
            "seed": self.seed,
            "out_dir": self.out_dir,
            "estimator": self.resolved_estimator,
            "region": self.region,
            "point": {"u": self.point_u, "x": list(self.point_x), "component": self.component},
            "bias": self.bias,
            "u_values": list(self.u_values),
            "rho_grid": list(self.rho_grid),
        }


def _num(value, name: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(name, "must be finite")
    return float(value)


def _num_list(value, name: str, kind=float) -> tuple:
    if not isinstance(value, list) or not value:
        raise ConfigError(name, "expected a non-empty list")
    return tuple(_num(v, f"{name}[{i}]", kind) for i, v in enumerate(value))


_KNOWN = {
    "scenario", "T_list", "T", "reps", "bandwidth", "grids", "seed", "out_dir", "estimator",
    "region", "point", "bias", "u_values", "rho_grid", "data", "description",
}


def parse_config(raw: Any) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "scenario" not in raw:
        raise ConfigError("scenario", "missing required key")
    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {scenario!r}; registered: {sorted(SCENARIOS)}")

    if "T_list" in raw:
        T_list = _num_list(raw["T_list"], "T_list", int)
    elif "T" in raw:
        T_list = (_num(raw["T"], "T", int),)
    else:
        raise ConfigError("T_list", "missing required key")
    if any(T < 10 for T in T_list):
        raise ConfigError("T_list", "sample sizes must be at least 10")
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ConfigError("T_list", "must be strictly increasing")

    reps = _num(raw.get("reps", 1), "reps", int)
    if reps < 1:
        raise ConfigError("reps", "must be at least 1")

    bw = raw.get("bandwidth", {"constant": 0.5, "exponent": 1.0 / 6.0})
    if not isinstance(bw, dict):
        raise ConfigError("bandwidth", "expected an object with constant and exponent")
    for key in ("constant", "exponent"):
        if key not in bw:
            raise ConfigError(f"bandwidth.{key}", "missing required key")
    const = _num(bw["constant"], "bandwidth.constant")
    expo = _num(bw["exponent"], "bandwidth.exponent")
    if const <= 0:
        raise ConfigError("bandwidth.constant", "must be positive")
    if not 0 < expo < 1:
        raise ConfigError("bandwidth.exponent", "must lie in (0, 1)")

    grids = raw.get("grids", {})
    if not isinstance(grids, dict):
        raise ConfigError("grids", "expected an object")
    u_points = _num(grids.get("u_points", 41), "grids.u_points", int)
    x_points = _num(grids.get("x_points", 41), "grids.x_points", int)
    if u_points < 2 or x_points < 2:
        raise ConfigError("grids", "grids need at least two points per axis")
    x_box = grids.get("x_box")
    if x_box is not None:
        x_box = _num_list(x_box, "grids.x_box")
        if len(x_box) != 2 or x_box[0] >= x_box[1]:
            raise ConfigError("grids.x_box", "expected [lo, hi] with lo < hi")

    seed = _num(raw.get("seed", 0), "seed", int)
    if seed < 0:
        raise ConfigError("seed", "must be non-negative")
    out_dir = raw.get("out_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("out_dir", "expected a non-empty string")

    estimator = raw.get("estimator")
    if estimator not in (None, "nw", "backfit"):
        raise ConfigError("estimator", "expected 'nw' or 'backfit'")
    if estimator == "backfit" and SCENARIOS[scenario].kind != "additive":
        raise ConfigError("estimator", f"backfitting needs an additive scenario, {scenario} is not")
    region = raw.get("region", "common")
    if region not in ("common", "per_T"):
        raise ConfigError("region", "expected 'common' or 'per_T'")
    bias = raw.get("bias", "undersmooth")
    if bias not in ("undersmooth", "correct"):
        raise ConfigError("bias", "expected 'undersmooth' or 'correct'")

    point = raw.get("point", {})
    if not isinstance(point, dict):
        raise ConfigError("point", "expected an object")
    pu = _num(point.get("u", 0.5), "point.u")
    if not 0 <= pu <= 1:
        raise ConfigError("point.u", "must lie in [0, 1]")
    px = point.get("x", [0.0])
    px = _num_list(px if isinstance(px, list) else [px], "point.x")
    comp = _num(point.get("component", 1), "point.component", int)

    u_values = _num_list(raw.get("u_values", [0.25, 0.5, 0.75]), "u_values")
    if any(not 0 <= u <= 1 for u in u_values):
        raise ConfigError("u_values", "must lie in [0, 1]")
    rho_grid = _num_list(raw.get("rho_grid", [0.25, 0.5, 1.0, 2.0]), "rho_grid")
    if any(r <= 0 for r in rho_grid):
        raise ConfigError("rho_grid", "must be positive")
    data = raw.get("data")
    if data is not None and not isinstance(data, str):
        raise ConfigError("data", "expected a path string")

    return ExperimentConfig(
        scenario=scenario, T_list=T_list, reps=reps, bandwidth=Bandwidth(const, expo),
        u_points=u_points, x_points=x_points, x_box=None if x_box is None else tuple(x_box),
        seed=seed, out_dir=out_dir, estimator=estimator, region=region, point_u=pu,
        point_x=px, component=comp, bias=bias, u_values=u_values, rho_grid=rho_grid, data=data,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)
