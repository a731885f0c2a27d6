"""Smooth backfitting for time-varying additive models.

For each rescaled time point ``u`` the additive fit is the projection of the
full-dimensional kernel smoother onto additive functions of ``x in [0,1]^d``
with respect to the kernel density estimate. The projection is computed by
Gauss-Seidel sweeps over the system of integral equations

    m_j(x) = mhat_j(x) - sum_{k != j} int m_k(z) phat_jk(x, z) / phat_j(x) dz - m0

discretized on a common grid with trapezoid weights.

Covariate-direction weights are renormalized with the *same* trapezoid rule
used for the integrals, so every marginalization identity
(``sum phat_jk = phat_j``, ``sum phat_j = 1``, ...) holds exactly on the grid and
the discrete equations are precisely the normal equations of the discrete
projection criterion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .estimator import _window
from .kernel import EPANECHNIKOV, Kernel, KernelMoments, boundary_denominator, boundary_weight
from .process import TriangularSample

__all__ = [
    "NoDataError",
    "BackfitDivergenceError",
    "UnsupportedDimensionError",
    "BackfitConfig",
    "PilotEstimates",
    "SolveResult",
    "BackfitResult",
    "trapezoid_weights",
    "obs_count",
    "pilot_estimates",
    "integral_equation_residual",
    "backfit_solve",
    "projection_criterion",
    "backfit_fit",
    "component_variance",
    "backfit_sup_error",
]

_LETTERS = "abcdefghij"
FULL_GRID_MAX_DIM = 3


class NoDataError(ValueError):
    """No in-cube observation carries time weight at this ``u``."""


class BackfitDivergenceError(ArithmeticError):
    pass


class UnsupportedDimensionError(ValueError):
    pass


def trapezoid_weights(grid: NDArray[np.float64]) -> NDArray[np.float64]:
    grid = np.asarray(grid, dtype=float)
    dx = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


@dataclass
class BackfitConfig:
    h: float
    u_grid: NDArray[np.float64] = field(default_factory=lambda: np.linspace(0, 1, 41))
    x_grid: NDArray[np.float64] = field(default_factory=lambda: np.linspace(0, 1, 41))
    tol: float = 1e-8
    max_iter: int = 200
    density_floor: float = 0.01
    kernel: Kernel = EPANECHNIKOV
    discrete_normalization: bool = True

    def __post_init__(self):
        self.u_grid = np.asarray(self.u_grid, dtype=float)
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        c = self.kernel.support_radius
        if not 0 < self.h < 1.0 / (2.0 * c):
            raise ValueError(f"h must lie in (0, {1 / (2 * c)})")
        for name, g, min_size in (("u_grid", self.u_grid, 1), ("x_grid", self.x_grid, 2)):
            if g.ndim != 1 or g.size < min_size or np.any(np.diff(g) <= 0) or g[0] < 0 or g[-1] > 1:
                raise ValueError(f"{name} must be an increasing grid inside [0, 1]")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")

    @property
    def interior(self) -> tuple[float, float]:
        """``[2 C1 h, 1 - 2 C1 h]``."""
        m = 2.0 * self.kernel.support_radius * self.h
        return m, 1.0 - m


def _time_weights(sample: TriangularSample, u: float, h: float, kernel: Kernel):
    """Rows with nonzero ``K_h(u, t/T) 1{X_t in cube}`` and their weights."""
    T = sample.T
    sl = _window(T, u, kernel.support_radius * h)
    rows = np.arange(sl.start, sl.stop)
    tw = np.asarray(boundary_weight(kernel, u, (rows + 1) / T, h), dtype=float).reshape(-1)
    xs = sample.x[rows]
    in_cube = np.all((xs >= 0.0) & (xs <= 1.0), axis=1)
    a = tw * in_cube
    keep = a > 0
    return rows[keep], a[keep]


def obs_count(sample: TriangularSample, u: float, h: float, kernel: Kernel = EPANECHNIKOV) -> float:
    """``N_T = sum_t K_h(u, t/T) 1{X_t in [0,1]^d}``."""
    c = kernel.support_radius
    if not 0 < h < 1.0 / (2.0 * c):
        raise ValueError(f"h must lie in (0, {1 / (2 * c)})")
    _, a = _time_weights(sample, u, h, kernel)
    return float(np.sum(a))


def _covariate_weights(values, grid, qw, h: float, kernel: Kernel, discrete: bool):
    """``K_h(x_g, X)`` for every observation (rows) and grid point (columns).

    The normalizer is either the trapezoid sum over the grid (``discrete``)
    or the exact ``int_0^1 K_h(s - X) ds``.
    """
    raw = kernel.func((grid[None, :] - values[:, None]) / h)
    den = raw @ qw if discrete else np.asarray(boundary_denominator(kernel, values, h), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den[:, None] > 0, raw / np.where(den > 0, den, 1.0)[:, None], 0.0)


@dataclass
class PilotEstimates:
    u: float
    n_t: float
    grid: NDArray[np.float64]
    qw: NDArray[np.float64]
    p_j: NDArray[np.float64]  # (d, G)
    p_jk: NDArray[np.float64]  # (d, d, G, G); diagonal blocks unused
    m_j: NDArray[np.float64]  # (d, G), NaN where p_j == 0
    m0_tilde: float
    full_p: NDArray[np.float64] | None = None
    full_m: NDArray[np.float64] | None = None

    @property
    def d(self) -> int:
        return self.p_j.shape[0]


def pilot_estimates(
    sample: TriangularSample,
    u: float,
    h: float,
    grid: NDArray[np.float64] | None = None,
    kernel: Kernel = EPANECHNIKOV,
    full: bool = False,
    discrete_normalization: bool = True,
) -> PilotEstimates:
    """Kernel density and NW pilots at time ``u`` on ``grid``^d."""
    grid = np.linspace(0, 1, 41) if grid is None else np.asarray(grid, dtype=float)
    qw = trapezoid_weights(grid)
    rows, a = _time_weights(sample, u, h, kernel)
    n_t = float(np.sum(a))
    if n_t == 0.0:
        raise NoDataError(f"no in-cube observations near u={u}")
    d = sample.d
    G = grid.size
    xs = sample.x[rows]
    ys = sample.y[rows]
    B = [_covariate_weights(xs[:, j], grid, qw, h, kernel, discrete_normalization) for j in range(d)]
    p_j = np.stack([a @ B[j] for j in range(d)]) / n_t
    p_jk = np.zeros((d, d, G, G))
    for j in range(d):
        for k in range(j + 1, d):
            p_jk[j, k] = (B[j] * a[:, None]).T @ B[k] / n_t
            p_jk[k, j] = p_jk[j, k].T
    num = np.stack([(a * ys) @ B[j] for j in range(d)]) / n_t
    with np.errstate(divide="ignore", invalid="ignore"):
        m_j = np.where(p_j > 0, num / np.where(p_j > 0, p_j, 1.0), np.nan)
    m0 = float(np.sum(a * ys)) / n_t
    full_p = full_m = None
    if full:
        if d > FULL_GRID_MAX_DIM:
            raise UnsupportedDimensionError(f"full grids are limited to d <= {FULL_GRID_MAX_DIM}")
        spec = "n," + ",".join(f"n{_LETTERS[j]}" for j in range(d)) + "->" + _LETTERS[:d]
        full_p = np.einsum(spec, a, *B, optimize=True) / n_t
        fnum = np.einsum(spec, a * ys, *B, optimize=True) / n_t
        with np.errstate(divide="ignore", invalid="ignore"):
            full_m = np.where(full_p > 0, fnum / np.where(full_p > 0, full_p, 1.0), np.nan)
    return PilotEstimates(float(u), n_t, grid, qw, p_j, p_jk, m_j, m0, full_p, full_m)


def _rhs(p: PilotEstimates, comps: NDArray[np.float64], j: int, active: NDArray[np.bool_]) -> NDArray[np.float64]:
    coupling = np.zeros(p.grid.size)
    for k in range(p.d):
        if k != j:
            coupling += p.p_jk[j, k] @ (p.qw * comps[k])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(active[j], p.m_j[j] - coupling / np.where(active[j], p.p_j[j], 1.0) - p.m0_tilde, 0.0)
    return out


def integral_equation_residual(p: PilotEstimates, comps: NDArray[np.float64]) -> float:
    """Sup over ``j`` and active cells of ``|m_j - rhs_j(m)|``."""
    active = p.p_j > 0
    worst = 0.0
    for j in range(p.d):
        r = np.abs(comps[j] - _rhs(p, comps, j, active))[active[j]]
        if r.size:
            worst = max(worst, float(np.max(r)))
    return worst


def _center(p: PilotEstimates, comp: NDArray[np.float64], j: int) -> NDArray[np.float64]:
    mass = float(np.sum(p.qw * p.p_j[j]))
    return comp - float(np.sum(p.qw * comp * p.p_j[j])) / mass


@dataclass
class SolveResult:
    m0: float
    components: NDArray[np.float64]  # (d, G)
    iterations: int
    residual: float
    converged: bool
    residual_history: list[float]


def backfit_solve(
    pilots: PilotEstimates, tol: float = 1e-8, max_iter: int = 200, divergence_window: int = 10
) -> SolveResult:
    """Gauss-Seidel sweeps ``j = 1..d`` from ``m_j = 0``, recentering after each update."""
    p = pilots
    d, G = p.d, p.grid.size
    active = p.p_j > 0
    comps = np.zeros((d, G))
    history: list[float] = []
    growing = 0
    res = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(d):
            comps[j] = np.where(active[j], _center(p, _rhs(p, comps, j, active), j), 0.0)
        res = integral_equation_residual(p, comps)
        if history and res > history[-1]:
            growing += 1
            if growing >= divergence_window:
                raise BackfitDivergenceError(
                    f"residual grew for {divergence_window} consecutive sweeps at u={p.u} (now {res:.3g})"
                )
        else:
            growing = 0
        history.append(res)
        if res <= tol:
            break
    return SolveResult(p.m0_tilde, comps, it, res, res <= tol, history)


def projection_criterion(pilots: PilotEstimates, g0: float, components: NDArray[np.float64]) -> float:
    """``int (mhat(w) - g0 - sum_j g_j(w^j))^2 phat(w) dw`` by product trapezoid quadrature."""
    p = pilots
    if p.full_p is None or p.full_m is None:
        raise UnsupportedDimensionError("projection criterion needs full grids (pilot_estimates(full=True))")
    d = p.d
    add = np.full(p.full_p.shape, float(g0))
    W = np.ones(p.full_p.shape)
    for j in range(d):
        shape = [1] * d
        shape[j] = -1
        add = add + np.asarray(components[j]).reshape(shape)
        W = W * p.qw.reshape(shape)
    live = p.full_p > 0
    resid = np.where(live, p.full_m - add, 0.0)
    return float(np.sum(W * resid * resid * p.full_p))


def component_variance(kernel_moments: KernelMoments, sigma2, p_j):
    """Limit variance ``kappa0^2 sigma_j^2 / p_j`` of ``sqrt(N_T h^2) (m_tilde_j - m_j)``."""
    return kernel_moments.kappa0**2 * np.asarray(sigma2) / np.asarray(p_j)


@dataclass
class BackfitResult:
    u_grid: NDArray[np.float64]
    x_grid: NDArray[np.float64]
    h: float
    interior: tuple[float, float]
    m0: NDArray[np.float64]  # (U,)
    components: NDArray[np.float64]  # (d, U, G)
    p_j: NDArray[np.float64]  # (d, U, G)
    low_density: NDArray[np.bool_]  # (d, U, G)
    n_t: NDArray[np.float64]
    iterations: NDArray[np.int64]
    fixed_point_residual: NDArray[np.float64]
    converged: NDArray[np.bool_]
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.components.shape[0]

    def normalization(self) -> NDArray[np.float64]:
        """``sum_x w(x) m_j(u, x) p_j(u, x)`` per ``(j, u)``."""
        qw = trapezoid_weights(self.x_grid)
        comps = np.nan_to_num(self.components)
        return np.sum(qw * comps * self.p_j, axis=-1)

    def diagnostics(self) -> dict:
        return {
            "h": self.h,
            "interior": list(self.interior),
            "u_grid": self.u_grid.tolist(),
            "iterations": self.iterations.tolist(),
            "fixed_point_residual": [None if not math.isfinite(r) else r for r in self.fixed_point_residual.tolist()],
            "converged": self.converged.tolist(),
            "n_t": self.n_t.tolist(),
            "masked_cells": int(self.low_density.sum()),
            "failed_u": {str(k): v for k, v in sorted(self.errors.items())},
        }

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for j in range(self.d):
            path = out / f"component_{j + 1}.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("u,x,value,converged,masked\n")
                for iu, u in enumerate(self.u_grid):
                    for ix, x in enumerate(self.x_grid):
                        v = self.components[j, iu, ix]
                        vs = "" if not np.isfinite(v) else repr(float(v))
                        fh.write(
                            f"{float(u)!r},{float(x)!r},{vs},{int(self.converged[iu])},{int(self.low_density[j, iu, ix])}\n"
                        )
            paths.append(path)
        path = out / "m0.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("u,value,converged\n")
            for iu, u in enumerate(self.u_grid):
                v = self.m0[iu]
                fh.write(f"{float(u)!r},{'' if not np.isfinite(v) else repr(float(v))},{int(self.converged[iu])}\n")
        paths.append(path)
        path = out / "diagnostics.json"
        path.write_text(json.dumps(self.diagnostics(), indent=2, sort_keys=True), encoding="utf-8")
        paths.append(path)
        return paths


def backfit_fit(sample: TriangularSample, config: BackfitConfig) -> BackfitResult:
    """Pilots and Gauss-Seidel solve at every ``u`` of the config grid.

    A ``u`` without data or with a diverging solve is recorded in ``errors``;
    the fit only fails when every ``u`` fails.
    """
    d = sample.d
    U, G = config.u_grid.size, config.x_grid.size
    m0 = np.full(U, np.nan)
    comps = np.full((d, U, G), np.nan)
    pj = np.zeros((d, U, G))
    low = np.ones((d, U, G), dtype=bool)
    n_t = np.zeros(U)
    iters = np.zeros(U, dtype=np.int64)
    resid = np.full(U, np.inf)
    conv = np.zeros(U, dtype=bool)
    errors: dict[int, str] = {}
    for iu, u in enumerate(config.u_grid):
        try:
            p = pilot_estimates(
                sample, u, config.h, config.x_grid, config.kernel, False, config.discrete_normalization
            )
            sol = backfit_solve(p, config.tol, config.max_iter)
        except (NoDataError, BackfitDivergenceError) as exc:
            errors[iu] = f"{type(exc).__name__}: {exc}"
            continue
        n_t[iu] = p.n_t
        m0[iu] = sol.m0
        active = p.p_j > 0
        comps[:, iu] = np.where(active, sol.components, np.nan)
        pj[:, iu] = p.p_j
        low[:, iu] = p.p_j < config.density_floor * p.p_j.max(axis=1, keepdims=True)
        iters[iu] = sol.iterations
        resid[iu] = sol.residual
        conv[iu] = sol.converged
    if len(errors) == U:
        raise NoDataError("backfitting failed at every u: " + "; ".join(errors.values()))
    return BackfitResult(
        config.u_grid.copy(), config.x_grid.copy(), config.h, config.interior,
        m0, comps, pj, low, n_t, iters, resid, conv, errors,
    )


def backfit_sup_error(
    result: BackfitResult,
    truth: Callable[[int, NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]],
    region: tuple[float, float] | None = None,
    components: Sequence[int] | None = None,
) -> float:
    """Max ``|m_tilde_j - m_j|`` over converged ``u``, unflagged cells, ``u, x^j`` in ``region``."""
    lo, hi = result.interior if region is None else region
    uu, xx = np.meshgrid(result.u_grid, result.x_grid, indexing="ij")
    sel = (uu >= lo - 1e-12) & (uu <= hi + 1e-12) & (xx >= lo - 1e-12) & (xx <= hi + 1e-12)
    sel &= result.converged[:, None]
    worst = -math.inf
    for j in components if components is not None else range(result.d):
        ok = sel & ~result.low_density[j] & np.isfinite(result.components[j])
        if ok.any():
            err = np.abs(result.components[j] - truth(j, uu, xx))
            worst = max(worst, float(np.max(err[ok])))
    if worst == -math.inf:
        raise ValueError("no valid cells in the evaluation region")
    return worst
