"""Time-smoothed Nadaraya-Watson estimation.

All kernel averages have the form

    psi(u, x) = 1/(T h^{d+1}) sum_t K_h(u - t/T) prod_j K_h(x^j - X^j_t) W_t

with ``K_h(v) = K(v/h)``. Only observations with ``|u - t/T| <= C1 h`` can
contribute, so evaluation touches a window of about ``2 C1 h T`` rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .kernel import EPANECHNIKOV, Kernel, KernelMoments
from .process import TriangularSample

__all__ = [
    "EmptyNeighborhoodError",
    "EstimatorConfig",
    "SurfaceGrid",
    "AsymptoticMoments",
    "bandwidth",
    "kernel_average",
    "kernel_average_naive",
    "nw_estimate",
    "nw_estimate_naive",
    "density_estimate",
    "nw_surface",
    "density_surface",
    "asymptotic_moments",
    "sup_error",
]

_LETTERS = "abcdefghijklm"


class EmptyNeighborhoodError(ValueError):
    """No observation carries kernel mass at the query point."""


def bandwidth(T: int, constant: float, exponent: float) -> float:
    """``h = constant * T^{-exponent}``."""
    return float(constant) * float(T) ** (-float(exponent))


@dataclass
class EstimatorConfig:
    h: float
    u_grid: NDArray[np.float64]
    x_axes: list[NDArray[np.float64]]
    kernel: Kernel = EPANECHNIKOV

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        self.u_grid = np.asarray(self.u_grid, dtype=float)
        self.x_axes = [np.asarray(a, dtype=float) for a in self.x_axes]
        for name, ax in [("u_grid", self.u_grid)] + [(f"x_axes[{j}]", a) for j, a in enumerate(self.x_axes)]:
            if ax.ndim != 1 or ax.size == 0 or np.any(np.diff(ax) <= 0):
                raise ValueError(f"{name} must be a non-empty increasing vector")
        if self.u_grid[0] < 0 or self.u_grid[-1] > 1:
            raise ValueError("u_grid must lie in [0, 1]")
        lo, hi = self.interior
        if lo > hi:
            raise ValueError("interior region [C1 h, 1 - C1 h] is empty")

    @property
    def interior_margin(self) -> float:
        return self.kernel.support_radius * self.h

    @property
    def interior(self) -> tuple[float, float]:
        return self.interior_margin, 1.0 - self.interior_margin


@dataclass
class SurfaceGrid:
    """Values on a product grid whose first axis is rescaled time.

    ``mask`` is True where the estimate is undefined (zero kernel mass).
    """

    axes: list[NDArray[np.float64]]
    values: NDArray[np.float64]
    mask: NDArray[np.bool_] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=float) for a in self.axes]
        shape = tuple(a.size for a in self.axes)
        self.values = np.asarray(self.values, dtype=float).reshape(shape)
        if self.mask is None:
            self.mask = ~np.isfinite(self.values)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(shape)

    def mesh(self) -> list[NDArray[np.float64]]:
        return np.meshgrid(*self.axes, indexing="ij")

    def to_csv(self, path: str | Path) -> None:
        d = len(self.axes) - 1
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u"] + [f"x{j + 1}" for j in range(d)] + ["value", "masked"])
            for idx in np.ndindex(*self.values.shape):
                coords = [repr(float(self.axes[k][i])) for k, i in enumerate(idx)]
                v = self.values[idx]
                w.writerow(coords + ["" if self.mask[idx] else repr(float(v)), int(self.mask[idx])])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SurfaceGrid":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        ncoord = len(rows[0]) - 2
        body = rows[1:]
        coords = np.array([[float(v) for v in r[:ncoord]] for r in body])
        axes = [np.unique(coords[:, k]) for k in range(ncoord)]
        vals = np.array([float(r[ncoord]) if r[ncoord] != "" else np.nan for r in body])
        mask = np.array([r[ncoord + 1] == "1" for r in body])
        return cls(axes, vals, mask)


def _as_point(x, d: int) -> NDArray[np.float64]:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise ValueError(f"point must have {d} coordinates")
    return x


def _window(T: int, u: float, reach: float) -> slice:
    """Row indices whose rescaled time lies within ``reach`` of ``u`` (padded by one row)."""
    lo = max(0, int(math.floor((u - reach) * T)) - 2)
    hi = min(T, int(math.ceil((u + reach) * T)) + 1)
    return slice(lo, max(lo, hi))


def _local_weights(sample: TriangularSample, u: float, x, h: float, kernel: Kernel):
    sl = _window(sample.T, u, kernel.support_radius * h)
    t = np.arange(sl.start + 1, sl.stop + 1) / sample.T
    k = kernel.func((u - t) / h)
    xs = sample.x[sl]
    for j in range(sample.d):
        k = k * kernel.func((x[j] - xs[:, j]) / h)
    return sl, k


def kernel_average(
    sample: TriangularSample, w, u: float, x, h: float, kernel: Kernel = EPANECHNIKOV
) -> float:
    """``1/(T h^{d+1}) sum_t K_h(u - t/T) prod_j K_h(x^j - X^j_t) W_t`` over the active window."""
    w = np.asarray(w, dtype=float)
    if w.shape != (sample.T,):
        raise ValueError("weight vector must have length T")
    x = _as_point(x, sample.d)
    sl, k = _local_weights(sample, u, x, h, kernel)
    return float(np.sum(k * w[sl])) / (sample.T * h ** (sample.d + 1))


def kernel_average_naive(
    sample: TriangularSample, w, u: float, x, h: float, kernel: Kernel = EPANECHNIKOV
) -> float:
    """Reference implementation: plain loop over every observation, no pruning."""
    T, d = sample.T, sample.d
    x = _as_point(x, d)
    total = 0.0
    for t in range(T):
        prod = float(kernel.func(np.float64((u - (t + 1) / T) / h)))
        for j in range(d):
            prod *= float(kernel.func(np.float64((x[j] - sample.x[t, j]) / h)))
        total += prod * float(w[t])
    return total / (T * h ** (d + 1))


def density_estimate(sample: TriangularSample, u: float, x, h: float, kernel: Kernel = EPANECHNIKOV) -> float:
    return kernel_average(sample, np.ones(sample.T), u, x, h, kernel)


def nw_estimate(sample: TriangularSample, u: float, x, h: float, kernel: Kernel = EPANECHNIKOV) -> float:
    x = _as_point(x, sample.d)
    sl, k = _local_weights(sample, u, x, h, kernel)
    den = float(np.sum(k))
    if den == 0.0:
        raise EmptyNeighborhoodError(f"no kernel mass at u={u}, x={x.tolist()}")
    return float(np.sum(k * sample.y[sl])) / den


def nw_estimate_naive(sample: TriangularSample, u: float, x, h: float, kernel: Kernel = EPANECHNIKOV) -> float:
    den = kernel_average_naive(sample, np.ones(sample.T), u, x, h, kernel)
    if den == 0.0:
        raise EmptyNeighborhoodError(f"no kernel mass at u={u}")
    return kernel_average_naive(sample, sample.y, u, x, h, kernel) / den


def _grid_sums(sample: TriangularSample, weights: Sequence, u_grid, x_axes, h: float, kernel: Kernel):
    """Raw sums ``sum_t K_h(u - t/T) prod_j K_h(x^j - X^j_t) W_t`` on the product grid."""
    T, d = sample.T, sample.d
    if len(x_axes) != d:
        raise ValueError(f"need {d} covariate axes")
    u_grid = np.asarray(u_grid, dtype=float)
    x_axes = [np.asarray(a, dtype=float) for a in x_axes]
    shape = (u_grid.size,) + tuple(a.size for a in x_axes)
    out = [np.zeros(shape) for _ in weights]
    spec = "n," + ",".join(f"n{_LETTERS[j]}" for j in range(d)) + "->" + _LETTERS[:d]
    reach = kernel.support_radius * h
    for iu, u in enumerate(u_grid):
        sl = _window(T, u, reach)
        if sl.stop <= sl.start:
            continue
        t = np.arange(sl.start + 1, sl.stop + 1) / T
        tw = kernel.func((u - t) / h)
        keep = tw != 0
        if not keep.any():
            continue
        rows = np.arange(sl.start, sl.stop)[keep]
        tw = tw[keep]
        mats = [kernel.func((ax[None, :] - sample.x[rows, j][:, None]) / h) for j, ax in enumerate(x_axes)]
        for k, w in enumerate(weights):
            out[k][iu] = np.einsum(spec, tw * np.asarray(w)[rows], *mats, optimize=True)
    return out


def nw_surface(
    sample: TriangularSample, u_grid, x_axes, h: float, kernel: Kernel = EPANECHNIKOV
) -> SurfaceGrid:
    """NW estimate on a product grid; cells with zero kernel mass are masked."""
    num, den = _grid_sums(sample, [sample.y, np.ones(sample.T)], u_grid, x_axes, h, kernel)
    mask = den == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(mask, np.nan, num / np.where(mask, 1.0, den))
    return SurfaceGrid([np.asarray(u_grid, dtype=float)] + list(x_axes), vals, mask)


def density_surface(
    sample: TriangularSample, u_grid, x_axes, h: float, kernel: Kernel = EPANECHNIKOV
) -> SurfaceGrid:
    (s,) = _grid_sums(sample, [np.ones(sample.T)], u_grid, x_axes, h, kernel)
    vals = s / (sample.T * h ** (sample.d + 1))
    return SurfaceGrid([np.asarray(u_grid, dtype=float)] + list(x_axes), vals, np.zeros(vals.shape, bool))


@dataclass(frozen=True)
class AsymptoticMoments:
    bias: float
    variance: float
    c_h: float


def asymptotic_moments(
    dm: Sequence[float],
    d2m: Sequence[float],
    f: float,
    df: Sequence[float],
    sigma2: float,
    c_h: float,
    kernel_moments: KernelMoments,
    d: int,
) -> AsymptoticMoments:
    """Limit mean and variance of ``sqrt(T h^{d+1}) (m_hat - m)`` at one point.

    ``dm``, ``d2m`` and ``df`` hold the first, pure second and first partial
    derivatives of ``m`` and ``f`` in the order ``(u, x^1, ..., x^d)``.
    """
    dm, d2m, df = (np.asarray(a, dtype=float) for a in (dm, d2m, df))
    if not (dm.shape == d2m.shape == df.shape == (d + 1,)):
        raise ValueError(f"derivative vectors must have length d + 1 = {d + 1}")
    if not f > 0:
        raise ValueError("density must be positive at the evaluation point")
    k0, k2 = kernel_moments.kappa0, kernel_moments.kappa2
    bias = math.sqrt(c_h) * 0.5 * k2 * float(np.sum(2.0 * dm * df + d2m * f)) / f
    var = k0 ** (d + 1) * sigma2 / f
    return AsymptoticMoments(bias=bias, variance=var, c_h=c_h)


def sup_error(
    estimate: SurfaceGrid,
    truth: Callable[..., NDArray[np.float64]],
    region: Sequence[tuple[float, float]] | None = None,
) -> float:
    """Max of ``|estimate - truth|`` over unmasked cells inside ``region`` (one interval per axis).

    ``truth`` is called with the meshgrid arrays ``(u, x1, ..., xd)``.
    """
    mesh = estimate.mesh()
    inside = ~estimate.mask
    if region is not None:
        if len(region) != len(mesh):
            raise ValueError("region needs one interval per axis")
        for g, (lo, hi) in zip(mesh, region):
            inside &= (g >= lo - 1e-12) & (g <= hi + 1e-12)
    if not inside.any():
        raise ValueError("every cell in the region is masked")
    err = np.abs(estimate.values - np.asarray(truth(*mesh), dtype=float))
    return float(np.max(err[inside]))
