"""Command-line entry point: ``locreg <subcommand> --config file.json [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 runtime or study failure, 2 usage or config error,
3 unwritable output directory. Failures print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np
from scipy.integrate import quad

from ..backfit import BackfitConfig, backfit_fit
from ..estimator import nw_surface
from ..kernel import (
    EPANECHNIKOV,
    boundary_weight,
    compute_moments,
    gauss_legendre_moments,
    riemann_sum_check,
)
from ..process import TriangularSample
from .config import ConfigError, ExperimentConfig, load_config
from .io import ensure_dir, write_json, write_rows
from .scenarios import get_scenario
from .studies import (
    run_ls_diagnostic,
    run_normality_study,
    run_rate_study,
    write_ls_diagnostic,
    write_normality_report,
    write_rate_report,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_OUTPUT = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fail(code: int, kind: str, message: str, field: str | None = None) -> int:
    payload = {"error": kind, "message": message}
    if field is not None:
        payload["field"] = field
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _load_sample(cfg: ExperimentConfig) -> TriangularSample:
    if cfg.data:
        try:
            return TriangularSample.from_csv(cfg.data)
        except OSError as exc:
            raise ConfigError("data", f"cannot read {cfg.data}: {exc.strerror or exc}") from None
    T = cfg.T_list[0]
    return get_scenario(cfg.scenario).sample(T, (cfg.seed, T, 0))


def cmd_simulate(cfg: ExperimentConfig) -> str:
    out = ensure_dir(cfg.out_dir)
    sc = get_scenario(cfg.scenario)
    for T in cfg.T_list:
        for r in range(cfg.reps):
            sc.sample(T, (cfg.seed, T, r)).to_csv(out / f"sample_T{T}_rep{r}.csv")
    return f"simulate: {sc.id} wrote {len(cfg.T_list) * cfg.reps} path(s) to {out}"


def cmd_fit_nw(cfg: ExperimentConfig) -> str:
    out = ensure_dir(cfg.out_dir)
    sample = _load_sample(cfg)
    sc = get_scenario(cfg.scenario)
    h = cfg.bandwidth(sample.T)
    lo, hi = cfg.x_box or sc.x_box
    est = nw_surface(sample, np.linspace(0, 1, cfg.u_points), [np.linspace(lo, hi, cfg.x_points)] * sample.d, h)
    est.to_csv(out / "nw_surface.csv")
    write_json(out / "summary.json", {
        "fit": "nw", "T": sample.T, "d": sample.d, "h": h,
        "masked_cells": int(est.mask.sum()), "config": cfg.to_dict(),
    })
    return f"fit-nw: T={sample.T} h={h:.4g} masked={int(est.mask.sum())}"


def cmd_fit_backfit(cfg: ExperimentConfig) -> str:
    out = ensure_dir(cfg.out_dir)
    sample = _load_sample(cfg)
    h = cfg.bandwidth(sample.T)
    try:
        bcfg = BackfitConfig(h=h, u_grid=np.linspace(0, 1, cfg.u_points), x_grid=np.linspace(0, 1, cfg.x_points))
    except ValueError as exc:
        raise ConfigError("bandwidth", str(exc)) from None
    res = backfit_fit(sample, bcfg)
    res.write(out)
    return (f"fit-backfit: T={sample.T} h={h:.4g} converged={int(res.converged.sum())}/{res.u_grid.size} "
            f"max_residual={float(np.max(res.fixed_point_residual)):.3g}")


def cmd_rate_study(cfg: ExperimentConfig) -> str:
    rep = run_rate_study(cfg)
    write_rate_report(rep, cfg)
    if not rep.ok:
        raise RuntimeError(f"rate study failed: failed replications per T {rep.failures}")
    return f"rate-study: {rep.scenario}/{rep.estimator} slope={rep.slope:.4f} (se {rep.slope_stderr:.4f})"


def cmd_normality_study(cfg: ExperimentConfig) -> str:
    rep = run_normality_study(cfg)
    write_normality_report(rep, cfg)
    return (f"normality-study: {rep.scenario}/{rep.estimator} T={rep.T} coverage={rep.coverage:.3f} "
            f"ks={rep.ks:.4f} variance_ratio={rep.variance_ratio:.3f} dropped={rep.n_dropped}")


def cmd_ls_diagnostic(cfg: ExperimentConfig) -> str:
    diag = run_ls_diagnostic(cfg)
    write_ls_diagnostic(diag, cfg)
    stable = sum(r["stable"] for r in diag.stability)
    return f"ls-diagnostic: {diag.scenario} stable {stable}/{len(diag.stability)} median ratios"


def cmd_kernel_check(cfg: ExperimentConfig) -> str:
    out = ensure_dir(cfg.out_dir)
    k = EPANECHNIKOV
    worst = 0.0
    for h in (0.05, 0.1):
        for w in np.linspace(0, 1, 200):
            a, b = max(0.0, w - h), min(1.0, w + h)
            total, _ = quad(lambda v: boundary_weight(k, v, w, h), a, b, points=[w], epsabs=1e-13)
            worst = max(worst, abs(total - 1.0))
    riemann = []
    for h in (0.05, 0.1):
        for T in cfg.T_list:
            for order in (0, 1, 2):
                d = riemann_sum_check(k, T, h, order)
                riemann.append([T, h, order, d, d * T * h * h])
    write_rows(out / "riemann.csv", ["T", "h", "k", "deviation", "scaled"], riemann)
    m, gl = compute_moments(k), gauss_legendre_moments(k)
    write_json(out / "summary.json", {
        "kernel": k.name, "kappa0": m.kappa0, "kappa2": m.kappa2,
        "kappa0_gauss_legendre": gl.kappa0, "kappa2_gauss_legendre": gl.kappa2,
        "normalization_max_dev": worst,
        "riemann_max_scaled": max(r[4] for r in riemann),
    })
    return f"kernel-check: kappa0={m.kappa0:.6f} kappa2={m.kappa2:.6f} riemann_max_scaled={max(r[4] for r in riemann):.3g}"


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-nw": cmd_fit_nw,
    "fit-backfit": cmd_fit_backfit,
    "rate-study": cmd_rate_study,
    "normality-study": cmd_normality_study,
    "ls-diagnostic": cmd_ls_diagnostic,
    "kernel-check": cmd_kernel_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="locreg", description="Locally stationary kernel regression experiments.")
    sub = p.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", default=None, help="override the output directory")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise _UsageError("missing subcommand; choose from " + ", ".join(COMMANDS))
    except _UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    try:
        cfg = load_config(args.config).with_seed(args.seed).with_out_dir(args.out)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed", "must be non-negative")
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "config", exc.message, exc.field)
    try:
        ensure_dir(cfg.out_dir)
    except OSError as exc:
        return _fail(EXIT_OUTPUT, "output", f"cannot write to {cfg.out_dir}: {exc.strerror or exc}", "out_dir")
    t0 = time.perf_counter()
    try:
        line = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "config", exc.message, exc.field)
    except OSError as exc:
        return _fail(EXIT_OUTPUT, "output", str(exc))
    except (ValueError, ArithmeticError, RuntimeError, KeyError) as exc:
        return _fail(EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}")
    print(f"{line} [{time.perf_counter() - t0:.1f}s]")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
