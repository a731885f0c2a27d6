"""Monte Carlo drivers.

Replication ``r`` at sample size ``T`` draws from the stream keyed by
``(seed, T, r)``; work items are pure functions of plain tuples, so a worker
pool and a serial loop give identical results. Results are kept in
replication order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..backfit import (
    BackfitConfig,
    backfit_fit,
    backfit_solve,
    backfit_sup_error,
    component_variance,
    pilot_estimates,
)
from ..estimator import EmptyNeighborhoodError, asymptotic_moments, nw_estimate, nw_surface, sup_error
from ..kernel import EPANECHNIKOV, compute_moments
from ..process import coupled_paths, coupling_report, stable_rho
from .config import ConfigError, ExperimentConfig
from .io import ensure_dir, write_json, write_rows
from .scenarios import Scenario, get_scenario
from .stats import coverage, fit_loglog_slope, iqr, ks_distance

MAX_FAILED_FRACTION = 0.10


def worker_count() -> int:
    n = os.cpu_count() or 1
    env = os.environ.get("LOCREG_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            pass
    return n


def pmap(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    workers = min(worker_count() if workers is None else workers, len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# --------------------------------------------------------------------- rates


@dataclass
class RateReport:
    scenario: str
    estimator: str
    rows: list[dict]  # per T: T, h, median, iqr, n_ok, n_failed
    raw: list[dict]  # per replication: T, h, rep, sup_error, status, message
    slope: float
    slope_stderr: float
    region: dict
    ok: bool = True
    failures: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "study": "rate",
            "scenario": self.scenario,
            "estimator": self.estimator,
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "rows": self.rows,
            "region": self.region,
            "failed_replications": self.failures,
            "ok": self.ok,
        }


def _rate_region(cfg: ExperimentConfig, sc: Scenario, h: float) -> tuple[float, float]:
    c = EPANECHNIKOV.support_radius
    mult = 2.0 if cfg.resolved_estimator == "backfit" else 1.0
    return mult * c * h, 1.0 - mult * c * h


def _rate_item(item) -> dict:
    sid, estimator, T, h, rep, seed, u_lo, u_hi, u_points, x_points, x_box = item
    sc = get_scenario(sid)
    row = {"T": T, "h": h, "rep": rep, "sup_error": math.nan, "status": "ok", "message": ""}
    try:
        sample = sc.sample(T, (seed, T, rep))
        u_grid = np.linspace(u_lo, u_hi, u_points)
        if estimator == "nw":
            x_axes = [np.linspace(x_box[0], x_box[1], x_points)] * sc.d
            est = nw_surface(sample, u_grid, x_axes, h)
            region = [(u_lo, u_hi)] + [tuple(x_box)] * sc.d
            row["sup_error"] = sup_error(est, sc.truth, region)
        else:
            res = backfit_fit(sample, BackfitConfig(h=h, u_grid=u_grid, x_grid=np.linspace(0, 1, x_points)))
            row["sup_error"] = backfit_sup_error(res, sc.component_truth, (u_lo, u_hi))
    except (ValueError, ArithmeticError) as exc:
        row["status"] = "failed"
        row["message"] = f"{type(exc).__name__}: {exc}"
    return row


def run_rate_study(cfg: ExperimentConfig, workers: int | None = None) -> RateReport:
    """Median interior sup error per ``T`` and the fitted log-log slope."""
    sc = get_scenario(cfg.scenario)
    est = cfg.resolved_estimator
    if len(cfg.T_list) < 3:
        raise ConfigError("T_list", "a rate study needs at least three sample sizes")
    x_box = cfg.x_box or sc.x_box
    h_ref = cfg.bandwidth(cfg.T_list[0])
    items = []
    for T in cfg.T_list:
        h = cfg.bandwidth(T)
        lo, hi = _rate_region(cfg, sc, h_ref if cfg.region == "common" else h)
        if lo >= hi:
            raise ConfigError("bandwidth", f"interior region is empty at T={T} (h={h:.4g})")
        if est == "backfit" and not 0 < h < 0.5:
            raise ConfigError("bandwidth", f"backfitting needs h < 0.5, got {h:.4g} at T={T}")
        for r in range(cfg.reps):
            items.append((sc.id, est, T, h, r, cfg.seed, lo, hi, cfg.u_points, cfg.x_points, tuple(x_box)))
    raw = pmap(_rate_item, items, workers)
    rows, failures, ok = [], {}, True
    for T in cfg.T_list:
        rr = [r for r in raw if r["T"] == T]
        good = [r["sup_error"] for r in rr if r["status"] == "ok"]
        nfail = len(rr) - len(good)
        failures[str(T)] = nfail
        if nfail > MAX_FAILED_FRACTION * len(rr):
            ok = False
        rows.append({
            "T": T, "h": rr[0]["h"],
            "median": float(np.median(good)) if good else math.nan,
            "iqr": iqr(good) if good else math.nan,
            "n_ok": len(good), "n_failed": nfail,
        })
    try:
        slope, se = fit_loglog_slope([(r["T"], r["median"]) for r in rows])
    except ValueError:
        slope, se, ok = math.nan, math.nan, False
    lo, hi = _rate_region(cfg, sc, h_ref)
    region = {"mode": cfg.region, "u": [lo, hi]}
    region["x"] = [lo, hi] if est == "backfit" else list(x_box)
    return RateReport(sc.id, est, rows, raw, slope, se, region, ok, failures)


def write_rate_report(report: RateReport, cfg: ExperimentConfig) -> list[Path]:
    out = ensure_dir(cfg.out_dir)
    paths = [
        write_rows(out / "rate_report.csv", ["T", "h", "median", "iqr", "n_ok", "n_failed"],
                   [[r[k] for k in ("T", "h", "median", "iqr", "n_ok", "n_failed")] for r in report.rows]),
        write_rows(out / "rate_raw.csv", ["T", "h", "rep", "sup_error", "status", "message"],
                   [[r[k] for k in ("T", "h", "rep", "sup_error", "status", "message")] for r in report.raw]),
    ]
    summary = report.summary()
    summary["config"] = cfg.to_dict()
    paths.append(write_json(out / "summary.json", summary))
    return paths


# ---------------------------------------------------------------- normality


@dataclass
class NormalityReport:
    scenario: str
    estimator: str
    T: int
    h: float
    point: dict
    raw: list[dict]  # per replication: rep, status, scaled_error, z, scale
    z: np.ndarray
    variance: float
    bias: float
    coverage: float
    ks: float
    variance_ratio: float
    n_dropped: int

    def summary(self) -> dict:
        return {
            "study": "normality",
            "scenario": self.scenario,
            "estimator": self.estimator,
            "T": self.T,
            "h": self.h,
            "point": self.point,
            "asymptotic_variance": self.variance,
            "asymptotic_bias": self.bias,
            "coverage95": self.coverage,
            "ks_distance": self.ks,
            "variance_ratio": self.variance_ratio,
            "reps": len(self.raw),
            "dropped": self.n_dropped,
        }


def _conditional_error_variance(sc: Scenario, j: int, u: float, xj: float) -> float:
    """``E[sigma^2(u, X) | X^j = x^j]`` under the product of in-cube marginals."""
    spec = sc.design
    nodes, weights = np.polynomial.legendre.leggauss(48)
    nodes, weights = 0.5 * (nodes + 1), 0.5 * weights
    others = [k for k in range(sc.d) if k != j]
    axes = []
    for k in others:
        p = spec.marginal_density(k, u, nodes)
        axes.append(weights * p / np.sum(weights * p))
    grids = np.meshgrid(*([nodes] * len(others)), indexing="ij")
    wts = np.ones(grids[0].shape) if others else np.ones(())
    for i, a in enumerate(axes):
        shape = [1] * len(others)
        shape[i] = -1
        wts = wts * a.reshape(shape)
    x = np.empty(grids[0].shape + (sc.d,)) if others else np.empty((sc.d,))
    for i, k in enumerate(others):
        x[..., k] = grids[i]
    x[..., j] = xj
    s = np.asarray(spec.error_sd_fn(u, x), dtype=float) * np.ones(x.shape[:-1])
    return float(np.sum(wts * s * s))


def _normality_item(item) -> dict:
    sid, estimator, T, h, rep, seed, u, x, comp, x_points = item
    sc = get_scenario(sid)
    row = {"rep": rep, "status": "ok", "estimate": math.nan, "scale": math.nan}
    try:
        sample = sc.sample(T, (seed, T, rep))
        if estimator == "nw":
            row["estimate"] = nw_estimate(sample, u, x, h)
            row["scale"] = math.sqrt(T * h ** (sc.d + 1))
        else:
            grid = np.linspace(0, 1, x_points)
            p = pilot_estimates(sample, u, h, grid)
            sol = backfit_solve(p)
            j = comp - 1
            row["estimate"] = float(np.interp(x[j], grid, sol.components[j]))
            row["scale"] = math.sqrt(p.n_t * h * h)
            if not sol.converged:
                raise ArithmeticError("backfitting did not converge")
    except (EmptyNeighborhoodError, ValueError, ArithmeticError) as exc:
        row["status"] = f"dropped: {type(exc).__name__}: {exc}"
    return row


def run_normality_study(cfg: ExperimentConfig, point: tuple[float, Sequence[float]] | None = None,
                        workers: int | None = None) -> NormalityReport:
    """Standardized errors at one point, their 95% coverage and KS distance to N(0, 1).

    NW: ``Z = (sqrt(T h^{d+1}) (m_hat - m) - B) / sqrt(V)`` with ``B = 0`` when
    undersmoothing. Backfitting: ``Z = sqrt(N_T h^2) (m_tilde_j - m_j) / sqrt(v_j)``.
    """
    sc = get_scenario(cfg.scenario)
    est = cfg.resolved_estimator
    if len(cfg.T_list) != 1:
        raise ConfigError("T_list", "a normality study takes exactly one sample size")
    T = cfg.T_list[0]
    h = cfg.bandwidth(T)
    u, x = (cfg.point_u, cfg.point_x) if point is None else (float(point[0]), tuple(point[1]))
    if len(x) != sc.d:
        raise ConfigError("point.x", f"needs {sc.d} coordinates for scenario {sc.id}")
    km = compute_moments(EPANECHNIKOV)
    if est == "nw":
        pt = sc.point(u, x)
        c_h = T * h ** (sc.d + 5)
        mom = asymptotic_moments(pt.dm, pt.d2m, pt.f, pt.df, pt.sigma2, c_h, km, sc.d)
        truth, var = pt.m, mom.variance
        bias = mom.bias if cfg.bias == "correct" else 0.0
    else:
        j = cfg.component - 1
        if not 0 <= j < sc.d:
            raise ConfigError("point.component", f"must lie in 1..{sc.d}")
        truth = float(sc.component_truth(j, u, x[j]))
        s2 = _conditional_error_variance(sc, j, u, x[j])
        var = float(component_variance(km, s2, sc.design.marginal_density(j, u, x[j])))
        bias = 0.0
    items = [(sc.id, est, T, h, r, cfg.seed, u, tuple(x), cfg.component, cfg.x_points) for r in range(cfg.reps)]
    raw = pmap(_normality_item, items, workers)
    scaled = []
    for r in raw:
        if r["status"] == "ok":
            r["scaled_error"] = r["scale"] * (r["estimate"] - truth)
            r["z"] = (r["scaled_error"] - bias) / math.sqrt(var)
            scaled.append(r["scaled_error"])
        else:
            r["scaled_error"] = r["z"] = math.nan
    z = np.array([r["z"] for r in raw if r["status"] == "ok"])
    dropped = len(raw) - z.size
    if z.size < 2:
        raise ArithmeticError("fewer than two usable replications")
    emp_var = float(np.var(scaled, ddof=1))
    return NormalityReport(
        sc.id, est, T, h, {"u": u, "x": list(x), "component": cfg.component if est == "backfit" else None},
        raw, z, var, bias, coverage(z), ks_distance(z), var / emp_var, dropped,
    )


def write_normality_report(report: NormalityReport, cfg: ExperimentConfig) -> list[Path]:
    out = ensure_dir(cfg.out_dir)
    keys = ("rep", "status", "estimate", "scale", "scaled_error", "z")
    p1 = write_rows(out / "normality_raw.csv", keys, [[r[k] for k in keys] for r in report.raw])
    summary = report.summary()
    summary["config"] = cfg.to_dict()
    return [p1, write_json(out / "summary.json", summary)]


# ------------------------------------------------------- local stationarity


@dataclass
class LsDiagnostic:
    scenario: str
    rows: list[dict]  # per (u, T)
    stability: list[dict]  # per u and consecutive T pair

    def summary(self) -> dict:
        return {"study": "ls-diagnostic", "scenario": self.scenario, "rows": self.rows, "stability": self.stability}


def _ls_item(item):
    sid, u, T, seed, iu, rho_grid = item
    sc = get_scenario(sid)
    if sc.model is None:
        raise ConfigError("scenario", f"{sid} is not an autoregressive scenario")
    rep = coupling_report(coupled_paths(sc.model, u, T, seed=(seed, T, iu)), u, rho_grid)
    return rep


def run_ls_diagnostic(cfg: ExperimentConfig, workers: int | None = None) -> LsDiagnostic:
    """Coupling statistics ``U_{t,T}(u)`` over ``u_values`` x ``T_list`` and their stability in ``T``."""
    sc = get_scenario(cfg.scenario)
    if sc.model is None:
        raise ConfigError("scenario", f"{sc.id} is not an autoregressive scenario")
    items = [(sc.id, u, T, cfg.seed, iu, cfg.rho_grid) for iu, u in enumerate(cfg.u_values) for T in cfg.T_list]
    reports = pmap(_ls_item, items, workers)
    rows, stability = [], []
    by_u: dict[float, list] = {}
    for (_, u, T, *_), rep in zip(items, reports):
        row = {
            "u": u, "T": T, "median_U": rep.median_u, "mean_U": float(np.mean(rep.u_stats)),
            "max_U": float(np.max(rep.u_stats)), "max_deviation": float(np.max(rep.deviations)),
        }
        row.update({f"moment_rho_{r:g}": v for r, v in rep.rho_moments.items()})
        rows.append(row)
        by_u.setdefault(u, []).append((T, rep))
    for u, lst in by_u.items():
        for (T1, r1), (T2, r2) in zip(lst, lst[1:]):
            m1, m2 = r1.median_u, r2.median_u
            ratio = (1.0 if m2 == 0 else math.inf) if m1 == 0 else m2 / m1
            stability.append({"u": u, "T1": T1, "T2": T2, "median_ratio": ratio,
                              "stable": bool(0.5 <= ratio <= 2.0), "stable_rho": stable_rho(r1, r2)})
    return LsDiagnostic(sc.id, rows, stability)


def write_ls_diagnostic(diag: LsDiagnostic, cfg: ExperimentConfig) -> list[Path]:
    out = ensure_dir(cfg.out_dir)
    keys = list(diag.rows[0].keys())
    p1 = write_rows(out / "ls_report.csv", keys, [[r[k] for k in keys] for r in diag.rows])
    skeys = ["u", "T1", "T2", "median_ratio", "stable", "stable_rho"]
    p2 = write_rows(out / "ls_stability.csv", skeys, [[r[k] for k in skeys] for r in diag.stability])
    summary = diag.summary()
    summary["config"] = cfg.to_dict()
    return [p1, p2, write_json(out / "summary.json", summary)]
