"""Command-line front end: ``bubblekit simulate | analyze | calibrate | test``.

Exit codes: 0 success, 1 numerical or convergence failure (or I/O error),
2 usage or validation error. ``BUBBLEKIT_THREADS`` caps worker threads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import cond_mean_return, superexp_condition, superexp_duration
from .calibrate import DEFAULT_BOUNDS, DEFAULT_INIT, fit_qmle, yield_series_from_prices
from .divergence import DEFAULT_DF, run_matrix
from .errors import BubbleKitError, RegimeError, ValidationError
from .io import parse_float, read_json, read_price_csv, write_json, write_table_csv
from .model import (
    PriceContext,
    YieldParams,
    amplification_phi,
    classify_regime,
    emergent_premium,
    stationary_moments,
)
from .sde import PARAM_NAMES, Model, Scheme, SeriesSample, SimSpec, price_path, simulate_paths

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def thread_cap() -> int:
    raw = os.environ.get("BUBBLEKIT_THREADS")
    default = min(8, os.cpu_count() or 1)
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"BUBBLEKIT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("BUBBLEKIT_THREADS must be >= 1")
    return n


def float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [parse_float(x) for x in text]
    return [parse_float(x) for x in str(text).split(",") if x.strip()]


def _number(text) -> float:
    try:
        return parse_float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _numbers(text) -> list[float]:
    try:
        return float_list(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _add_config(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of option values, or a manifest written by a previous run")
    p.add_argument("--out", default=None, help="output directory (required)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bubblekit", description="Earning-yield bubble model toolkit")
    parser.add_argument("--version", action="version", version=f"bubblekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate yield and price paths")
    _add_config(sim)
    sim.add_argument("--model", choices=[m.value for m in Model], default="cir")
    sim.add_argument("--b", type=_number)
    sim.add_argument("--alpha", type=_number)
    sim.add_argument("--gamma-star", type=_number, help="sets b = alpha * gamma_star for cir/ckls")
    sim.add_argument("--psi", type=_number)
    sim.add_argument("--v", type=_number, help="CKLS elasticity")
    sim.add_argument("--p0", type=_number)
    sim.add_argument("--earnings", type=_number)
    sim.add_argument("--n", type=int, help="number of steps")
    sim.add_argument("--dt", type=_number, default=1 / 252)
    sim.add_argument("--paths", type=int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--scheme", choices=[s.value for s in Scheme], default="euler")

    ana = sub.add_parser("analyze", help="moment curves, stationary summary and super-exponential sweep")
    _add_config(ana)
    ana.add_argument("--alpha", type=_numbers, help="one value or a comma-separated grid")
    ana.add_argument("--gamma-star", type=_number)
    ana.add_argument("--psi", type=_numbers, help="one value or a comma-separated grid")
    ana.add_argument("--p0", type=_number)
    ana.add_argument("--earnings", type=_number)
    ana.add_argument("--t-max", type=_number, default=2000.0)
    ana.add_argument("--t-points", type=int, default=200)
    ana.add_argument("--tc-p0", type=_numbers, help="initial prices for the duration sweep (default: --p0)")

    for name, helptext in (("calibrate", "QMLE fit of a price series"), ("test", "divergence tests against BM/GBM/CKLS")):
        p = sub.add_parser(name, help=helptext)
        _add_config(p)
        p.add_argument("prices", nargs="?", help="CSV with header date,close")
        p.add_argument("--gamma0", type=_number, help="yield at the window start; sets E = gamma0 * P_start")
        p.add_argument("--start", help="first date of the window (ISO-8601)")
        p.add_argument("--end", help="last date of the window (ISO-8601)")
        p.add_argument("--dt", type=_number, default=1 / 252)
        if name == "test":
            p.add_argument("--df", type=int, default=None, help=f"chi-square degrees of freedom (default {DEFAULT_DF})")
    return parser


def _load_config(path) -> dict:
    data = read_json(path)
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    # manifests nest the resolved options under "config"
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return {k.replace("-", "_"): v for k, v in data.items() if k not in ("command", "schema_version", "version")}


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = _load_config(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        # config supplies defaults; explicit flags still win
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args.out is None:
        raise UsageError("--out is required")
    return args


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise UsageError(f"--{name.replace('_', '-')} must be > 0, got {value}")


def _sim_params(args) -> tuple[float, ...]:
    model = Model(args.model)
    b = args.b
    if args.gamma_star is not None and model in (Model.CIR, Model.CKLS):
        _require(args, "alpha")
        if b is not None and not math.isclose(b, args.alpha * args.gamma_star, rel_tol=1e-12):
            raise UsageError("--b and --gamma-star disagree")
        b = args.alpha * args.gamma_star
    values = {"b": b, "alpha": args.alpha, "psi": args.psi, "v": args.v}
    missing = [k for k in PARAM_NAMES[model] if values[k] is None]
    if missing:
        raise UsageError(f"model {model.value} needs: " + ", ".join("--" + m for m in missing))
    return tuple(values[k] for k in PARAM_NAMES[model])


def _resolved(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys}


def cmd_simulate(args) -> int:
    _require(args, "p0", "earnings", "n")
    _positive("p0", args.p0)
    _positive("earnings", args.earnings)
    _positive("dt", args.dt)
    if args.paths < 1:
        raise UsageError("--paths must be >= 1")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    params = _sim_params(args)
    gamma0 = args.earnings / args.p0
    spec = SimSpec(Model(args.model), params, gamma0, args.n, args.dt, args.seed, Scheme(args.scheme))
    paths = simulate_paths(spec, args.paths, max_workers=thread_cap())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(args.paths - 1)))
    files, clamped = [], {}
    for i, row in enumerate(paths):
        g = SeriesSample(row, args.dt)
        p = price_path(g, args.earnings)
        name = f"path_{i:0{width}d}.csv"
        write_table_csv(out / name, ["t", "gamma", "price"], zip(g.times, g.values, p.values))
        files.append(name)
        if p.clamped:
            clamped[name] = list(p.clamped)
    config = _resolved(
        args, ["model", "b", "alpha", "gamma_star", "psi", "v", "p0", "earnings", "n", "dt", "paths", "seed", "scheme"]
    )
    write_json(
        out / "manifest.json",
        {
            "command": "simulate",
            "version": __version__,
            "config": config,
            "params": dict(zip(PARAM_NAMES[spec.model], params)),
            "gamma0": gamma0,
            "rng": "numpy default_rng(SeedSequence(seed, spawn_key=(path_index,)))",
            "files": files,
            "clamped_indices": clamped,
        },
    )
    return EXIT_OK


def _stationary_row(alpha, gamma_star, psi, earnings, p0):
    params = YieldParams.from_gamma_star(alpha, gamma_star, psi)
    ctx = PriceContext.from_price(earnings, p0)
    regime = classify_regime(params)
    mom = stationary_moments(params, ctx)
    try:
        phi = amplification_phi(params)
        rho = emergent_premium(params)
    except RegimeError:
        phi = rho = math.inf
    p_star = ctx.p_star(params)
    return [
        alpha, gamma_star, psi, regime.value, ctx.h_threshold(params), p_star, ctx.mu_star(params),
        phi, rho, phi * p_star, mom.mean_return, mom.var_return,
    ]


def cmd_analyze(args) -> int:
    _require(args, "alpha", "gamma_star", "psi", "p0", "earnings")
    for name in ("gamma_star", "p0", "earnings", "t_max"):
        _positive(name, getattr(args, name))
    alphas, psis = float_list(args.alpha), float_list(args.psi)
    for a in alphas:
        _positive("alpha", a)
    for s in psis:
        _positive("psi", s)
    if args.t_points < 2:
        raise UsageError("--t-points must be >= 2")
    tc_p0 = float_list(args.tc_p0) if args.tc_p0 is not None else [args.p0]
    for p in tc_p0:
        _positive("tc_p0", p)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    times = np.linspace(args.t_max / args.t_points, args.t_max, args.t_points)
    ctx = PriceContext.from_price(args.earnings, args.p0)

    curve_rows, summary_rows, tc_rows = [], [], []
    for alpha in alphas:
        for psi in psis:
            params = YieldParams.from_gamma_star(alpha, args.gamma_star, psi)
            summary_rows.append(_stationary_row(alpha, args.gamma_star, psi, args.earnings, args.p0))
            for t in times:
                try:
                    val = cond_mean_return(float(t), params, ctx)
                    status = "ok"
                except RegimeError:
                    val, status = math.inf, "explosive"
                curve_rows.append([alpha, psi, t, val, status])
            for p0 in tc_p0:
                c = PriceContext.from_price(args.earnings, p0)
                try:
                    cond = superexp_condition(params, c)
                except RegimeError:
                    tc_rows.append([alpha, psi, p0, "", math.nan, "explosive"])
                    continue
                if not cond:
                    tc_rows.append([alpha, psi, p0, False, math.nan, "condition violated"])
                    continue
                try:
                    tc_rows.append([alpha, psi, p0, True, superexp_duration(params, c), "ok"])
                except BubbleKitError as exc:
                    tc_rows.append([alpha, psi, p0, True, math.nan, str(exc)])

    write_table_csv(out / "expected_return.csv", ["alpha", "psi", "t", "expected_return", "status"], curve_rows)
    write_table_csv(
        out / "stationary_summary.csv",
        ["alpha", "gamma_star", "psi", "regime", "H", "P_star", "mu_star", "phi", "rho_e", "phi_P_star",
         "mean_return_inf", "var_return_inf"],
        summary_rows,
    )
    write_table_csv(out / "superexp.csv", ["alpha", "psi", "p0", "condition", "t_c", "status"], tc_rows)
    config = _resolved(args, ["alpha", "gamma_star", "psi", "p0", "earnings", "t_max", "t_points", "tc_p0"])
    write_json(
        out / "manifest.json",
        {
            "command": "analyze",
            "version": __version__,
            "config": config,
            "files": ["expected_return.csv", "stationary_summary.csv", "superexp.csv"],
        },
    )
    return EXIT_OK


def _load_window(args):
    _require(args, "prices", "gamma0")
    _positive("gamma0", args.gamma0)
    _positive("dt", args.dt)
    table = read_price_csv(args.prices).window(args.start, args.end)
    if len(table.dates) < 2:
        raise UsageError("the selected window has fewer than two prices")
    ys = yield_series_from_prices(SeriesSample(table.closes, args.dt), args.gamma0)
    return table, ys


def _fit_payload(fit) -> dict:
    names = ("b", "alpha", "psi")
    derived = fit.derived
    return {
        "theta_hat": dict(zip(names, fit.theta_hat)),
        "stderr": dict(zip(names, fit.stderr)) if fit.stderr else None,
        "loglik": fit.loglik,
        "two_loglik": 2.0 * fit.loglik,
        "n_obs": fit.n_obs,
        "dt": fit.dt,
        "diagnostics": {
            "converged": fit.converged,
            "iterations": fit.iterations,
            "gradient_norm": fit.gradient_norm,
            "message": fit.message,
        },
        "derived": None if derived is None else {
            "gamma_star_hat": derived.gamma_star_hat,
            "p_star_hat": derived.p_star_hat,
            "phi_hat": derived.phi_hat,
            "h_hat": derived.h_hat,
            "p_dagger_hat": derived.p_dagger_hat,
            "explosive": derived.explosive,
            "note": derived.note,
        },
    }


def cmd_calibrate(args) -> int:
    table, ys = _load_window(args)
    fit = fit_qmle(ys.series, earnings=ys.earnings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(out / "gamma.csv", ["date", "gamma"], zip(table.dates, ys.series.values))
    config = _resolved(args, ["prices", "gamma0", "start", "end", "dt"])
    write_json(
        out / "report.json",
        {
            "command": "calibrate",
            "version": __version__,
            "config": config,
            "window": {"start": table.dates[0], "end": table.dates[-1], "n_prices": len(table.dates)},
            "earnings": ys.earnings,
            "bounds": [list(b) for b in DEFAULT_BOUNDS],
            "init": list(DEFAULT_INIT),
            "fit": _fit_payload(fit),
        },
    )
    if not fit.converged:
        print(f"calibration did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_test(args) -> int:
    if args.df is not None and args.df < 1:
        raise UsageError("--df must be >= 1")
    table, ys = _load_window(args)
    fit = fit_qmle(ys.series, earnings=ys.earnings)
    reports = run_matrix(ys.series, fit, df_override=args.df, max_workers=thread_cap())
    cells = [
        {
            "alternative": r.alternative.value,
            "kind": r.kind.value,
            "statistic": r.statistic,
            "df": r.df,
            "p_value": r.p_value,
            "stars": r.stars,
            "valid": r.valid,
            "message": r.message,
            "theta_alt": list(r.theta_alt),
        }
        for r in reports
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(
        out / "divergence_table.csv",
        ["kind", "alternative", "statistic", "df", "p_value", "stars", "valid"],
        [[c["kind"], c["alternative"], c["statistic"], c["df"], c["p_value"], c["stars"], c["valid"]] for c in cells],
    )
    config = _resolved(args, ["prices", "gamma0", "start", "end", "dt", "df"])
    write_json(
        out / "report.json",
        {
            "command": "test",
            "version": __version__,
            "config": config,
            "window": {"start": table.dates[0], "end": table.dates[-1], "n_prices": len(table.dates)},
            "earnings": ys.earnings,
            "df": DEFAULT_DF if args.df is None else args.df,
            "null_fit": _fit_payload(fit),
            "cells": cells,
        },
    )
    if not fit.converged:
        print(f"null calibration did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "calibrate": cmd_calibrate, "test": cmd_test}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        # argparse reports usage errors this way
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, ValidationError) as exc:
        print(f"bubblekit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BubbleKitError as exc:
        print(f"bubblekit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"bubblekit: I/O error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
