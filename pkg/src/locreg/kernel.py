"""Kernel functions and kernel weights.

Conventions used throughout the package:

* ``K_h(v) = K(v / h)`` -- the scaled kernel is *not* divided by ``h``;
  estimator prefactors carry every ``1/h``.
* The boundary-normalized weight ``K_h(v, w)`` integrates to one over
  ``v in [0, 1]`` for every ``w in [0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

__all__ = [
    "Kernel",
    "KernelMoments",
    "EPANECHNIKOV",
    "TRIANGULAR",
    "BIWEIGHT",
    "get_kernel",
    "scaled_eval",
    "compute_moments",
    "gauss_legendre_moments",
    "boundary_denominator",
    "boundary_weight",
    "time_weights",
    "local_moment",
    "riemann_sum_check",
    "simpson",
]

# composite Simpson node count used wherever no closed form is available
SIMPSON_NODES = 2001


@dataclass(frozen=True)
class Kernel:
    """Symmetric, compactly supported, Lipschitz weight function with unit mass.

    ``cdf`` is the antiderivative ``F(z) = int_{-inf}^z K``; when omitted it is
    computed by composite Simpson quadrature on the support.
    """

    name: str
    func: Callable[[NDArray[np.float64]], NDArray[np.float64]]
    support_radius: float = 1.0
    lipschitz_bound: float = 1.5
    cdf_func: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = field(
        default=None, repr=False
    )

    def __call__(self, v: ArrayLike) -> NDArray[np.float64] | float:
        arr = np.asarray(v, dtype=float)
        out = self.func(arr)
        return float(out) if out.ndim == 0 else out

    def cdf(self, z: ArrayLike) -> NDArray[np.float64] | float:
        arr = np.asarray(z, dtype=float)
        if self.cdf_func is not None:
            out = self.cdf_func(arr)
        else:
            c = self.support_radius
            zc = np.clip(arr, -c, c)
            out = np.vectorize(lambda b: simpson(self.func, -c, b))(zc)
        return float(out) if np.ndim(out) == 0 else out


def simpson(f: Callable, a: float, b: float, n: int = SIMPSON_NODES) -> float:
    """Composite Simpson rule for ``int_a^b f`` with ``n`` (odd) nodes."""
    if b <= a:
        return 0.0
    if n % 2 == 0:
        n += 1
    x = np.linspace(a, b, n)
    return float(integrate.simpson(f(x), x=x))


def _epanechnikov(v):
    return np.where(np.abs(v) <= 1.0, 0.75 * (1.0 - v * v), 0.0)


def _epanechnikov_cdf(z):
    zc = np.clip(z, -1.0, 1.0)
    return 0.5 + 0.75 * zc - 0.25 * zc**3


def _triangular(v):
    return np.maximum(1.0 - np.abs(v), 0.0)


def _triangular_cdf(z):
    zc = np.clip(z, -1.0, 1.0)
    return np.where(zc <= 0, 0.5 * (1 + zc) ** 2, 1 - 0.5 * (1 - zc) ** 2)


def _biweight(v):
    return np.where(np.abs(v) <= 1.0, 15.0 / 16.0 * (1.0 - v * v) ** 2, 0.0)


EPANECHNIKOV = Kernel("epanechnikov", _epanechnikov, 1.0, 1.5, _epanechnikov_cdf)
TRIANGULAR = Kernel("triangular", _triangular, 1.0, 1.0, _triangular_cdf)
# no closed-form cdf on purpose: exercises the quadrature path
BIWEIGHT = Kernel("biweight", _biweight, 1.0, 5.0 / (2.0 * np.sqrt(3.0)))

_REGISTRY = {k.name: k for k in (EPANECHNIKOV, TRIANGULAR, BIWEIGHT)}


def get_kernel(name: str | Kernel) -> Kernel:
    if isinstance(name, Kernel):
        return name
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; known: {sorted(_REGISTRY)}") from None


@dataclass(frozen=True)
class KernelMoments:
    kappa0: float  # int K^2
    kappa2: float  # int v^2 K(v) dv


def _check_h(h: float) -> float:
    h = float(h)
    if not np.isfinite(h) or h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    return h


def scaled_eval(kernel: Kernel, v: ArrayLike, h: float):
    """``K(v / h)`` (no ``1/h`` factor)."""
    h = _check_h(h)
    return kernel(np.asarray(v, dtype=float) / h)


def compute_moments(kernel: Kernel) -> KernelMoments:
    """Moment constants by adaptive quadrature on the support."""
    c = kernel.support_radius
    k0, _ = integrate.quad(lambda v: kernel(v) ** 2, -c, c, epsabs=1e-14, epsrel=1e-13, limit=200)
    k2, _ = integrate.quad(lambda v: v * v * kernel(v), -c, c, epsabs=1e-14, epsrel=1e-13, limit=200)
    return KernelMoments(kappa0=k0, kappa2=k2)


def gauss_legendre_moments(kernel: Kernel, n_nodes: int = 400, panels: int = 8) -> KernelMoments:
    """Same constants by composite Gauss-Legendre; an independent cross-check."""
    c = kernel.support_radius
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    edges = np.linspace(-c, c, panels + 1)
    k0 = k2 = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        w = 0.5 * (b - a) * weights
        kx = kernel.func(x)
        k0 += float(np.sum(w * kx * kx))
        k2 += float(np.sum(w * x * x * kx))
    return KernelMoments(kappa0=k0, kappa2=k2)


def boundary_denominator(kernel: Kernel, w: ArrayLike, h: float):
    """``int_0^1 K_h(s - w) ds`` evaluated through the kernel cdf."""
    h = _check_h(h)
    w = np.asarray(w, dtype=float)
    out = h * (np.asarray(kernel.cdf((1.0 - w) / h)) - np.asarray(kernel.cdf(-w / h)))
    return float(out) if out.ndim == 0 else out


def boundary_weight(kernel: Kernel, v: ArrayLike, w: ArrayLike, h: float):
    """Modified weight ``1{v,w in [0,1]} K_h(v - w) / int_0^1 K_h(s - w) ds``."""
    h = _check_h(h)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    inside = (v >= 0) & (v <= 1) & (w >= 0) & (w <= 1)
    denom = np.asarray(boundary_denominator(kernel, np.clip(w, 0.0, 1.0), h))
    num = np.asarray(kernel((v - w) / h))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(inside & (denom > 0), num / np.where(denom > 0, denom, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def time_weights(kernel: Kernel, u: float, T: int, h: float) -> NDArray[np.float64]:
    """``K_h(u, t/T)`` for ``t = 1..T``; the time-direction weight of the additive pilots."""
    t = np.arange(1, T + 1) / T
    return np.asarray(boundary_weight(kernel, u, t, h), dtype=float)


def local_moment(kernel: Kernel, v: float, h: float, order: int) -> float:
    """``kappa_l(v) = int_0^1 w^l K_h(v, w) dw`` (boundary moment of the modified weight)."""
    h = _check_h(h)
    c = kernel.support_radius
    a, b = max(0.0, v - c * h), min(1.0, v + c * h)
    return simpson(lambda w: w**order * np.asarray(boundary_weight(kernel, v, w, h)), a, b)


def riemann_sum_check(kernel: Kernel, T: int, h: float, k: int, n_u: int = 2001) -> float:
    """Sup over ``u`` in ``[C1 h, 1 - C1 h]`` of the Riemann-sum deviation of order ``k``.

    Compares ``(1/Th) sum_t K_h(u - t/T) ((u - t/T)/h)^k`` with its integral
    counterpart; the latter equals the ``k``-th kernel moment for interior ``u``.
    """
    h = _check_h(h)
    if k not in (0, 1, 2):
        raise ValueError("k must be 0, 1 or 2")
    c = kernel.support_radius
    if not 0 < h < 1.0 / (2.0 * c):
        raise ValueError(f"h must lie in (0, {1 / (2 * c)})")
    target = (1.0, 0.0, compute_moments(kernel).kappa2)[k]
    us = np.linspace(c * h, 1.0 - c * h, n_u)
    t = np.arange(1, T + 1) / T
    worst = 0.0
    for u in us:
        lo = max(0, int(np.floor((u - c * h) * T)) - 1)
        hi = min(T, int(np.ceil((u + c * h) * T)) + 1)
        z = (u - t[lo:hi]) / h
        s = float(np.sum(kernel.func(z) * z**k)) / (T * h)
        worst = max(worst, abs(s - target))
    return worst
