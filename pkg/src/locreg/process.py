"""Simulation of locally stationary processes.

* time-varying nonlinear autoregressions ``X_t = m(t/T, lags) + sigma(t/T, lags) eps_t``,
* their frozen-time stationary companions,
* coupled pairs for local-stationarity diagnostics,
* additive-model designs with time-varying AR(1) covariates,
* closed-form oracles for the linear tvAR(1) special case.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from . import rng as _rng
from .kernel import EPANECHNIKOV, Kernel

__all__ = [
    "ExplosionError",
    "TvNarModel",
    "TriangularSample",
    "CouplingReport",
    "CovariateModel",
    "AdditiveDesignSpec",
    "gaussian_innovations",
    "tvar1_model",
    "tvar1_stationary_variance",
    "tvar1_stationary_density",
    "simulate_tvnar",
    "simulate_frozen",
    "coupled_paths",
    "coupling_report",
    "stable_rho",
    "density_smoothness_probe",
    "autocov_decay_proxy",
    "generate_additive_design",
]

DEFAULT_BURN_IN = 1000
RHO_GRID = (0.25, 0.5, 1.0, 2.0)


class ExplosionError(ArithmeticError):
    """A recursion produced a non-finite value."""

    def __init__(self, step: int, phase: str):
        self.step = step
        self.phase = phase
        super().__init__(f"non-finite value at {phase} step {step}; model is not contracting")


def gaussian_innovations(rng: np.random.Generator, n: int) -> NDArray[np.float64]:
    return rng.standard_normal(n)


def _clamp(u: float) -> float:
    return 0.0 if u < 0.0 else (1.0 if u > 1.0 else u)


@dataclass(frozen=True)
class TvNarModel:
    """``X_t = m(u, y) + sigma(u, y) eps_t`` with ``y = (X_{t-1}, ..., X_{t-d})``.

    ``m`` and ``sigma`` receive a float ``u`` and a length-``d`` array of lags.
    Rescaled time is clamped to ``[0, 1]`` before every evaluation.
    """

    d: int
    m: Callable[[float, NDArray[np.float64]], float]
    sigma: Callable[[float, NDArray[np.float64]], float]
    innovation_sampler: Callable[[np.random.Generator, int], NDArray[np.float64]] = gaussian_innovations
    innovation_density: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = stats.norm.pdf
    innovation_sd: float = 1.0
    sigma_lower: float | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("lag order d must be positive")

    def mean_at(self, u: float, y) -> float:
        return float(self.m(_clamp(u), np.asarray(y, dtype=float)))

    def sigma_at(self, u: float, y) -> float:
        return float(self.sigma(_clamp(u), np.asarray(y, dtype=float)))

    def check_sigma(self, probe_u: Sequence[float], probe_y: Sequence[float]) -> float:
        """Smallest ``sigma`` over a probe grid; raises if not bounded away from zero."""
        lo = math.inf
        for u in probe_u:
            for yv in probe_y:
                lo = min(lo, self.sigma_at(u, np.full(self.d, yv)))
        bound = self.sigma_lower if self.sigma_lower is not None else 0.0
        if not lo > bound or lo <= 0:
            raise ValueError(f"sigma drops to {lo} on the probe grid (lower bound {bound})")
        return lo


def tvar1_model(a: Callable[[float], float], sd: float = 1.0, intercept: float = 0.0) -> TvNarModel:
    """Linear tvAR(1): ``X_t = c + a(t/T) X_{t-1} + sd * eps_t``."""
    return TvNarModel(
        d=1,
        m=lambda u, y: intercept + a(u) * y[0],
        sigma=lambda u, y: sd,
        innovation_sd=1.0,
        sigma_lower=0.0,
    )


def tvar1_stationary_variance(a_u: float, sd: float = 1.0) -> float:
    return sd * sd / (1.0 - a_u * a_u)


def tvar1_stationary_density(x, a_u: float, sd: float = 1.0):
    return stats.norm.pdf(x, scale=math.sqrt(tvar1_stationary_variance(a_u, sd)))


@dataclass
class TriangularSample:
    """One realization ``{(X_{t,T}, Y_{t,T})}``; row ``t-1`` sits at rescaled time ``t/T``."""

    x: NDArray[np.float64]
    y: NDArray[np.float64]
    true_errors: NDArray[np.float64] | None = None
    seed: int | tuple[int, ...] | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y must have the same number of rows")
        if self.true_errors is not None:
            self.true_errors = np.asarray(self.true_errors, dtype=float)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(1, self.T + 1) / self.T

    def to_csv(self, path: str | Path) -> None:
        cols = ["t"] + [f"x{j + 1}" for j in range(self.d)] + ["y", "eps"]
        eps = self.true_errors if self.true_errors is not None else np.full(self.T, np.nan)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i in range(self.T):
                row = [str(i + 1)] + [repr(float(v)) for v in self.x[i]]
                row += [repr(float(self.y[i])), "" if np.isnan(eps[i]) else repr(float(eps[i]))]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path) -> "TriangularSample":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        d = sum(1 for c in header if c.startswith("x"))
        arr = np.array([[float(v) if v != "" else np.nan for v in r] for r in body])
        eps = arr[:, d + 2]
        return cls(arr[:, 1 : d + 1], arr[:, d + 1], None if np.isnan(eps).all() else eps)

    def save(self, path: str | Path) -> None:
        """Binary cache (``.npz``)."""
        extra = {} if self.true_errors is None else {"true_errors": self.true_errors}
        seed = np.atleast_1d(np.asarray(self.seed if self.seed is not None else [], dtype=np.int64))
        np.savez(path, x=self.x, y=self.y, seed=seed, **extra)

    @classmethod
    def load(cls, path: str | Path) -> "TriangularSample":
        with np.load(path) as z:
            seed = tuple(int(s) for s in z["seed"]) or None
            if seed is not None and len(seed) == 1:
                seed = seed[0]
            return cls(z["x"], z["y"], z["true_errors"] if "true_errors" in z else None, seed)


def _recurse(
    model: TvNarModel, u_burn: float, u_path: NDArray[np.float64], eps: NDArray[np.float64], burn_in: int
):
    """Run ``burn_in`` steps frozen at ``u_burn`` then one step per entry of ``u_path``."""
    d = model.d
    n = burn_in + u_path.shape[0]
    buf = np.zeros(n + d)
    errs = np.empty(u_path.shape[0])
    m, sigma = model.m, model.sigma
    for i in range(n):
        k = i + d
        u = u_burn if i < burn_in else u_path[i - burn_in]
        lags = buf[k - d : k][::-1]
        s = sigma(u, lags)
        e = s * eps[i]
        val = m(u, lags) + e
        if not math.isfinite(val):
            phase = "burn-in" if i < burn_in else "sample"
            raise ExplosionError(i + 1 if i < burn_in else i - burn_in + 1, phase)
        buf[k] = val
        if i >= burn_in:
            errs[i - burn_in] = e
    return buf, errs


def _as_sample(model: TvNarModel, buf, errs, T: int, seed) -> TriangularSample:
    d = model.d
    path = buf[-T:]
    # lag j of observation t sits at buf[len - T + t - 1 - j]
    start = buf.shape[0] - T
    x = np.column_stack([buf[start - j : start - j + T] for j in range(1, d + 1)])
    return TriangularSample(x=x, y=path.copy(), true_errors=errs, seed=_rng.seed_repr(seed))


def _check_sizes(model: TvNarModel, T: int, burn_in: int) -> None:
    if T < model.d + 1:
        raise ValueError(f"T must be at least d + 1 = {model.d + 1}")
    if burn_in < 100:
        raise ValueError("burn_in must be at least 100")


def simulate_tvnar(
    model: TvNarModel, T: int, burn_in: int = DEFAULT_BURN_IN, seed: _rng.SeedLike = 0
) -> TriangularSample:
    """Simulate ``X_{1,T}, ..., X_{T,T}``; the pre-sample follows the frozen ``u = 0`` recursion.

    The returned sample has ``y[t] = X_{t,T}`` and ``x[t] = (X_{t-1,T}, ..., X_{t-d,T})``.
    """
    _check_sizes(model, T, burn_in)
    eps = np.asarray(model.innovation_sampler(_rng.stream(seed, _rng.SIMULATE), burn_in + T), dtype=float)
    u_path = np.arange(1, T + 1) / T
    buf, errs = _recurse(model, 0.0, np.clip(u_path, 0, 1), eps, burn_in)
    return _as_sample(model, buf, errs, T, seed)


def simulate_frozen(
    model: TvNarModel, u: float, T: int, burn_in: int = DEFAULT_BURN_IN, seed: _rng.SeedLike = 0
) -> TriangularSample:
    """Stationary companion at rescaled time ``u`` (burn-in also frozen at ``u``)."""
    _check_sizes(model, T, burn_in)
    uc = _clamp(float(u))
    eps = np.asarray(model.innovation_sampler(_rng.stream(seed, _rng.SIMULATE), burn_in + T), dtype=float)
    buf, errs = _recurse(model, uc, np.full(T, uc), eps, burn_in)
    return _as_sample(model, buf, errs, T, seed)


def coupled_paths(
    model: TvNarModel, u: float, T: int, seed: _rng.SeedLike = 0, burn_in: int = DEFAULT_BURN_IN
) -> tuple[TriangularSample, TriangularSample]:
    """tvNAR path and frozen-``u`` path driven by one innovation sequence.

    Both recursions consume the same draws, including the pre-sample: the
    tvNAR path runs its pre-sample at ``u = 0`` and the frozen path at ``u``,
    so each is exactly the process it is meant to be.
    """
    return simulate_tvnar(model, T, burn_in, seed), simulate_frozen(model, u, T, burn_in, seed)


@dataclass
class CouplingReport:
    u: float
    deviations: NDArray[np.float64]
    bound_factors: NDArray[np.float64]
    u_stats: NDArray[np.float64]
    rho_moments: dict[float, float] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.deviations.shape[0]

    @property
    def median_u(self) -> float:
        return float(np.median(self.u_stats))


def coupling_report(
    pair: tuple[TriangularSample, TriangularSample], u: float, rho_grid: Sequence[float] = RHO_GRID
) -> CouplingReport:
    """``U_{t,T}(u) = |X_{t,T} - X_t(u)| / (|t/T - u| + 1/T)`` and its empirical moments."""
    tv, fr = pair
    if tv.T != fr.T:
        raise ValueError("paths must have the same length")
    if tv.seed != fr.seed:
        raise ValueError("paths must share their seed")
    T = tv.T
    dev = np.abs(tv.y - fr.y)
    bound = np.abs(tv.times - u) + 1.0 / T
    ustat = dev / bound
    moments = {float(r): float(np.mean(ustat**r)) for r in rho_grid}
    return CouplingReport(float(u), dev, bound, ustat, moments)


def stable_rho(first: CouplingReport, second: CouplingReport, lo: float = 0.5, hi: float = 2.0) -> float | None:
    """Largest grid ``rho`` whose moment is finite in both reports with ratio in ``[lo, hi]``."""
    best = None
    for rho in sorted(set(first.rho_moments) & set(second.rho_moments)):
        a, b = first.rho_moments[rho], second.rho_moments[rho]
        if not (math.isfinite(a) and math.isfinite(b)):
            continue
        if a == 0 and b == 0:
            best = rho
        elif a > 0 and lo <= b / a <= hi:
            best = rho
    return best


def _kde(sample: NDArray[np.float64], grid: NDArray[np.float64], bw: float, kernel: Kernel) -> NDArray[np.float64]:
    s = np.sort(sample)
    c = kernel.support_radius * bw
    lo = np.searchsorted(s, grid - c, side="left")
    hi = np.searchsorted(s, grid + c, side="right")
    out = np.empty(grid.shape[0])
    for i, g in enumerate(grid):
        out[i] = np.sum(kernel.func((g - s[lo[i] : hi[i]]) / bw))
    return out / (s.shape[0] * bw)


def density_smoothness_probe(
    model: TvNarModel,
    u: float,
    v: float,
    n: int,
    seed: _rng.SeedLike = 0,
    burn_in: int = DEFAULT_BURN_IN,
    n_grid: int = 201,
    common_noise: bool = False,
    kernel: Kernel = EPANECHNIKOV,
) -> float:
    """``sup_y |f(u, y) - f(v, y)|`` estimated from two frozen simulations.

    Both densities use one Epanechnikov bandwidth ``n^{-1/5} * sd`` (pooled sd)
    on a shared grid. With ``common_noise`` the two simulations reuse one
    innovation stream, which removes most of the Monte Carlo noise from the
    difference.
    """
    if n < 10_000:
        raise ValueError("n must be at least 1e4")
    su = simulate_frozen(model, u, n, burn_in, (seed if common_noise else _rng.stream(seed, _rng.PROBE, 0)))
    sv = simulate_frozen(model, v, n, burn_in, (seed if common_noise else _rng.stream(seed, _rng.PROBE, 1)))
    a, b = su.y, sv.y
    pooled = np.concatenate([a, b])
    bw = n ** (-0.2) * float(np.std(pooled))
    grid = np.linspace(*np.quantile(pooled, [0.005, 0.995]), n_grid)
    return float(np.max(np.abs(_kde(a, grid, bw, kernel) - _kde(b, grid, bw, kernel))))


def autocov_decay_proxy(sample: TriangularSample, max_lag: int, window: int | None = None) -> NDArray[np.float64]:
    """Absolute autocovariances at lags ``1..max_lag``, averaged over local windows.

    Each non-overlapping window is demeaned separately, so slow drifts in the
    level do not leak into the estimate.
    """
    T = sample.T
    if T < 50 * max_lag:
        raise ValueError("need T >= 50 * max_lag")
    L = window or max(50 * max_lag, T // 8)
    L = min(L, T)
    z = sample.y
    acc = np.zeros(max_lag)
    nwin = T // L
    for w in range(nwin):
        seg = z[w * L : (w + 1) * L]
        seg = seg - seg.mean()
        for k in range(1, max_lag + 1):
            acc[k - 1] += np.dot(seg[:-k], seg[k:]) / L
    return np.abs(acc / nwin)


@dataclass(frozen=True)
class CovariateModel:
    """Independent time-varying AR(1) coordinates squashed into ``(c - w, c + w)``.

    ``Z^j_t = a_j(t/T) Z^j_{t-1} + sd * eta_t`` and ``X^j_t = c + w tanh(Z^j_t / scale)``.
    """

    ar_coefs: tuple[Callable[[NDArray[np.float64]], NDArray[np.float64]], ...]
    innovation_sd: float = 1.0
    center: float = 0.5
    half_width: float = 0.55
    scale: float = 1.3

    @property
    def d(self) -> int:
        return len(self.ar_coefs)

    def squash(self, z):
        return self.center + self.half_width * np.tanh(np.asarray(z) / self.scale)

    def stationary_sd(self, j: int, u):
        a = np.asarray(self.ar_coefs[j](np.clip(u, 0, 1)), dtype=float)
        return self.innovation_sd / np.sqrt(1.0 - a * a)

    def density(self, j: int, u, x):
        """Stationary density of ``X^j_t(u)`` at ``x`` (zero outside the range of the map)."""
        u, x = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(x, dtype=float))
        r = (x - self.center) / self.half_width
        ok = np.abs(r) < 1
        rr = np.where(ok, r, 0.0)
        z = self.scale * np.arctanh(rr)
        dzdx = self.scale / (self.half_width * (1.0 - rr * rr))
        sd = self.stationary_sd(j, u)
        return np.where(ok, stats.norm.pdf(z, scale=sd) * dzdx, 0.0)

    def unit_probability(self, j: int, u):
        """``P(X^j_t(u) in [0, 1])``."""
        lo = (0.0 - self.center) / self.half_width
        hi = (1.0 - self.center) / self.half_width
        zl = self.scale * np.arctanh(np.clip(lo, -1 + 1e-16, 1 - 1e-16))
        zh = self.scale * np.arctanh(np.clip(hi, -1 + 1e-16, 1 - 1e-16))
        sd = self.stationary_sd(j, u)
        return stats.norm.cdf(zh / sd) - stats.norm.cdf(zl / sd)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)
_UNIT_NODES = 0.5 * (_GL_NODES + 1.0)
_UNIT_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class AdditiveDesignSpec:
    """``Y = m0(u) + sum_j m_j(u, X^j) + error_sd(u, X) * xi``.

    ``raw_components`` are shapes before identification; :meth:`component`
    subtracts ``c_j(u) = int_0^1 g_j(u, x) p_j(u, x) dx`` where ``p_j`` is the
    ``[0,1]``-marginal of the frozen covariate density. Because coordinates
    are independent that marginal is exact in closed form.
    """

    m0: Callable
    raw_components: tuple[Callable, ...]
    covariate_model: CovariateModel
    error_sd_fn: Callable

    def __post_init__(self):
        if len(self.raw_components) != self.covariate_model.d:
            raise ValueError("one raw component per covariate required")

    @property
    def d(self) -> int:
        return len(self.raw_components)

    def marginal_density(self, j: int, u, x):
        """``p_j(u, x)`` -- density of ``X^j(u)`` restricted and renormalized to ``[0, 1]``."""
        x = np.asarray(x, dtype=float)
        inside = (x >= 0) & (x <= 1)
        p = self.covariate_model.density(j, u, x) / self.covariate_model.unit_probability(j, u)
        return np.where(inside, p, 0.0)

    def centering(self, j: int, u):
        u = np.asarray(u, dtype=float)
        uu = u[..., None]
        g = self.raw_components[j](uu, _UNIT_NODES)
        p = self.marginal_density(j, uu, _UNIT_NODES)
        return np.sum(_UNIT_WEIGHTS * g * p, axis=-1)

    def component(self, j: int, u, x):
        u = np.asarray(u, dtype=float)
        return self.raw_components[j](u, x) - self.centering(j, u)

    def regression(self, u, x):
        """``m0(u) + sum_j m_j(u, x^j)``; ``x`` has a trailing axis of length ``d``."""
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.m0(np.asarray(u, dtype=float)), dtype=float)
        for j in range(self.d):
            out = out + self.component(j, u, x[..., j])
        return out

    def cube_probability(self, u):
        p = 1.0
        for j in range(self.d):
            p = p * self.covariate_model.unit_probability(j, u)
        return p


def generate_additive_design(
    spec: AdditiveDesignSpec, T: int, seed: _rng.SeedLike = 0, burn_in: int = DEFAULT_BURN_IN
) -> TriangularSample:
    if T < 200:
        raise ValueError("T must be at least 200")
    cm = spec.covariate_model
    d = spec.d
    eta = _rng.stream(seed, _rng.COVARIATES).standard_normal((burn_in + T, d)) * cm.innovation_sd
    xi = _rng.stream(seed, _rng.ERRORS).standard_normal(T)
    u_all = np.concatenate([np.zeros(burn_in), np.arange(1, T + 1) / T])
    coef = np.column_stack([np.asarray(a(u_all), dtype=float) * np.ones_like(u_all) for a in cm.ar_coefs])
    z = np.zeros(d)
    zs = np.empty((T, d))
    for i in range(burn_in + T):
        z = coef[i] * z + eta[i]
        if i >= burn_in:
            zs[i - burn_in] = z
    if not np.all(np.isfinite(zs)):
        bad = int(np.argmax(~np.all(np.isfinite(zs), axis=1))) + 1
        raise ExplosionError(bad, "sample")
    x = cm.squash(zs)
    u = np.arange(1, T + 1) / T
    errs = np.asarray(spec.error_sd_fn(u, x), dtype=float) * np.ones(T) * xi
    y = spec.regression(u, x) + errs
    return TriangularSample(x=x, y=y, true_errors=errs, seed=_rng.seed_repr(seed))
