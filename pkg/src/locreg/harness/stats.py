from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import stats

Z975 = float(stats.norm.ppf(0.975))


def fit_loglog_slope(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """OLS slope of ``log(error)`` on ``log(T)`` and its standard error."""
    if len(points) < 3:
        raise ValueError("need at least three (T, error) rows")
    T = np.array([p[0] for p in points], dtype=float)
    err = np.array([p[1] for p in points], dtype=float)
    if np.any(~np.isfinite(err)) or np.any(err <= 0):
        raise ValueError("errors must be positive and finite")
    if np.any(T <= 0):
        raise ValueError("sample sizes must be positive")
    fit = stats.linregress(np.log(T), np.log(err))
    return float(fit.slope), float(fit.stderr)


def iqr(values) -> float:
    q75, q25 = np.percentile(values, [75, 25])
    return float(q75 - q25)


def coverage(z, level: float = 0.95) -> float:
    crit = float(stats.norm.ppf(0.5 + level / 2))
    z = np.asarray(z, dtype=float)
    return float(np.mean(np.abs(z) <= crit))


def ks_distance(z) -> float:
    """Kolmogorov-Smirnov distance between the empirical law of ``z`` and N(0, 1)."""
    return float(stats.kstest(np.asarray(z, dtype=float), "norm").statistic)


def finite_or_none(x: float):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None
