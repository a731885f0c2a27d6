"""Registered simulation scenarios.

S0  time-constant AR(1) covariate, noiseless response ``Y = X_{t-1}^2`` (bias-only regime)
S1  linear tvAR(1), ``a(u) = 0.9 - 0.5 u``, Gaussian innovations (exact oracles)
S2  bounded nonlinear tvNAR(1), ``m = sin(2 pi u) tanh(x)``, heteroskedastic
S3  additive design, d = 2
S4  additive design, d = 3 (S3 plus a third component)
C0  time-constant AR(1) (control for the coupling diagnostic)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..process import (
    AdditiveDesignSpec,
    CovariateModel,
    TriangularSample,
    TvNarModel,
    generate_additive_design,
    simulate_tvnar,
    tvar1_model,
    tvar1_stationary_density,
    tvar1_stationary_variance,
)
from ..rng import SeedLike

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PointTruth:
    """Closed-form quantities at one ``(u, x)`` for the normality formulas."""

    m: float
    dm: tuple[float, ...]
    d2m: tuple[float, ...]
    f: float
    df: tuple[float, ...]
    sigma2: float


@dataclass(frozen=True)
class Scenario:
    id: str
    kind: str  # "ar", "regression" or "additive"
    d: int
    description: str
    x_box: tuple[float, float] = (-2.0, 2.0)
    model: TvNarModel | None = None
    design: AdditiveDesignSpec | None = None
    response: Callable | None = field(default=None, repr=False)
    truth_fn: Callable | None = field(default=None, repr=False)
    point_fn: Callable | None = field(default=None, repr=False)

    def sample(self, T: int, seed: SeedLike) -> TriangularSample:
        if self.kind == "additive":
            return generate_additive_design(self.design, T, seed)
        s = simulate_tvnar(self.model, T, seed=seed)
        if self.kind == "regression":
            y = np.asarray(self.response(s.times, s.x), dtype=float)
            return TriangularSample(s.x, y, np.zeros(s.T), s.seed)
        return s

    def truth(self, u, *x):
        """``m(u, x)`` on broadcastable arrays."""
        if self.kind == "additive":
            return self.design.regression(u, np.stack(np.broadcast_arrays(*x), axis=-1))
        return self.truth_fn(u, *x)

    def component_truth(self, j: int, u, x):
        return self.design.component(j, u, x)

    def point(self, u: float, x) -> PointTruth:
        if self.point_fn is None:
            raise ValueError(f"scenario {self.id} has no closed-form point quantities")
        return self.point_fn(u, np.atleast_1d(np.asarray(x, dtype=float)))


def _a1(u):
    return 0.9 - 0.5 * u


def _s1_point(u: float, x) -> PointTruth:
    xv = float(x[0])
    a, da = _a1(u), -0.5
    v = tvar1_stationary_variance(a)
    f = float(tvar1_stationary_density(xv, a))
    dv = 2.0 * a * da / (1.0 - a * a) ** 2
    df_u = f * dv * (xv * xv / (2 * v * v) - 1.0 / (2 * v))
    df_x = -xv * f / v
    return PointTruth(a * xv, (da * xv, a), (0.0, 0.0), f, (df_u, df_x), 1.0)


def _s2_m(u, y):
    return math.sin(TWO_PI * u) * math.tanh(y[0])


def _s2_sigma(u, y):
    return 0.5 + 0.25 * math.cos(TWO_PI * u) / (1.0 + y[0] * y[0])


def _additive_spec(d: int) -> AdditiveDesignSpec:
    coefs = (
        lambda u: 0.3 + 0.4 * np.asarray(u),
        lambda u: 0.6 - 0.4 * np.asarray(u),
        lambda u: 0.4 + 0.2 * np.sin(TWO_PI * np.asarray(u)),
    )[:d]
    raw = (
        lambda u, x: (1.0 + u) * np.sin(TWO_PI * x),
        lambda u, x: 2.0 * u * (x - 0.5) + 2.0 * (x - 0.5) ** 2,
        lambda u, x: (1.5 - u) * np.cos(math.pi * x),
    )[:d]
    return AdditiveDesignSpec(
        m0=lambda u: 1.0 + 0.5 * np.sin(TWO_PI * np.asarray(u)),
        raw_components=raw,
        covariate_model=CovariateModel(ar_coefs=coefs, innovation_sd=1.0, center=0.5, half_width=0.55, scale=1.3),
        error_sd_fn=lambda u, x: 0.5,
    )


def _build() -> dict[str, Scenario]:
    s1 = tvar1_model(_a1)
    s2 = TvNarModel(d=1, m=_s2_m, sigma=_s2_sigma, sigma_lower=0.25)
    c0 = tvar1_model(lambda u: 0.5)
    out = [
        Scenario(
            "S0", "regression", 1, "time-constant AR(1) covariate, Y = X^2 without noise",
            x_box=(-0.5, 0.5), model=c0, response=lambda t, x: x[:, 0] ** 2, truth_fn=lambda u, x: x * x + 0 * u,
        ),
        Scenario(
            "S1", "ar", 1, "linear tvAR(1) with a(u) = 0.9 - 0.5u",
            model=s1, truth_fn=lambda u, x: _a1(u) * x, point_fn=_s1_point,
        ),
        Scenario(
            "S2", "ar", 1, "nonlinear tvNAR(1): sin(2 pi u) tanh(x), heteroskedastic",
            x_box=(-0.5, 0.5), model=s2, truth_fn=lambda u, x: np.sin(TWO_PI * u) * np.tanh(x),
        ),
        Scenario("S3", "additive", 2, "additive design, d = 2", x_box=(0.0, 1.0), design=_additive_spec(2)),
        Scenario("S4", "additive", 3, "additive design, d = 3", x_box=(0.0, 1.0), design=_additive_spec(3)),
        Scenario(
            "C0", "ar", 1, "time-constant AR(1), a = 0.5",
            model=c0, truth_fn=lambda u, x: 0.5 * x + 0 * u,
        ),
    ]
    return {s.id: s for s in out}


SCENARIOS: dict[str, Scenario] = _build()


def get_scenario(scenario_id: str) -> Scenario:
    try:
        return SCENARIOS[scenario_id]
    except KeyError:
        raise KeyError(f"unknown scenario {scenario_id!r}; registered: {sorted(SCENARIOS)}") from None
