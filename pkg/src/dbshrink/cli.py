"""Command line entry point: ``dbshrink run|sweep-t|sweep-a|verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .estimators import a_optimal, t_max
from .experiments import (
    TABLE_FIELDS,
    ExperimentConfig,
    format_rows,
    parse_grid,
    run_table,
    sweep_a,
    sweep_t,
    verify,
)
from .families import DistributionFamily
from .risk import NumericalFailure, scenario_k_star
from .sampling import Scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    pass


def _workers(text):
    return "auto" if text == "auto" else int(text)


def _common(parser):
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=None)
    parser.add_argument("--workers", type=_workers, default=None, help="worker processes or 'auto'")


def _scenario_args(parser, reps):
    parser.add_argument("--p", type=int, required=True)
    parser.add_argument("--m", type=int, required=True)
    parser.add_argument("--rho", type=float, default=0.9)
    parser.add_argument("--family", choices=("gaussian", "student"), default="gaussian")
    parser.add_argument("--nu", type=float, default=None)
    parser.add_argument("--reps", type=int, default=reps)
    parser.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="dbshrink", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a PRIAL table from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--unpaired", action="store_true", help="disable common random numbers")
    p_run.add_argument("--reps", type=int, default=None, help="override the config's reps")
    p_run.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    _common(p_run)

    p_t = sub.add_parser("sweep-t", help="PRIAL against the correction strength t")
    _scenario_args(p_t, 1000)
    p_t.add_argument("--grid", default=None, help="start:stop:num or comma list (default 0..2*t_max, 21 points)")
    _common(p_t)

    p_a = sub.add_parser("sweep-a", help="risk of a*S against a")
    _scenario_args(p_a, 1000)
    p_a.add_argument("--grid", default=None, help="start:stop:num or comma list (default 25 points over [a_o/2, 3a_o/2])")
    _common(p_a)

    p_v = sub.add_parser("verify", help="Monte Carlo check of the Stein-Haff identity")
    _scenario_args(p_v, 10_000)
    p_v.add_argument("--g", choices=("correction", "s", "zero"), default="correction")
    p_v.add_argument("--t", type=float, default=None)
    p_v.add_argument("--strict", action="store_true", help="exit 3 when the check fails")
    p_v.add_argument("--out", help="write the JSON verdict here")
    p_v.add_argument("--format", choices=("text", "json"), default="text")
    p_v.add_argument("--workers", type=_workers, default=None)
    return parser


def _scenario(args):
    family = DistributionFamily.student(args.nu) if args.family == "student" else DistributionFamily.gaussian()
    return Scenario.ar1(args.p, args.m, args.rho, family=family)


def _emit(text, path):
    if path:
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _cmd_run(args):
    try:
        cfg = ExperimentConfig.from_file(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid config {args.config}: {exc}") from exc
    if args.unpaired:
        cfg.paired = False
    if args.reps is not None:
        cfg.reps = args.reps
    if args.seed is not None:
        cfg.master_seed = args.seed
    workers = args.workers if args.workers is not None else cfg.workers
    result = run_table(cfg, workers=workers)
    fmt = args.format or cfg.output_format
    _emit(format_rows(result.rows, fmt, TABLE_FIELDS), args.out or cfg.output_path)
    return EXIT_NUMERICAL if result.failures else EXIT_OK


def _cmd_sweep_t(args):
    sc = _scenario(args)
    tm = t_max(sc.p, sc.m)
    grid = parse_grid(args.grid) if args.grid else np.linspace(0.0, 2.0 * tm, 21)
    rows = sweep_t(sc, grid, args.reps, args.seed, args.workers or 1)
    _emit(format_rows(rows, args.format or "csv"), args.out)
    return EXIT_OK


def _cmd_sweep_a(args):
    sc = _scenario(args)
    a_o = a_optimal(sc.p, sc.m, scenario_k_star(sc))
    grid = parse_grid(args.grid) if args.grid else a_o * np.linspace(0.5, 1.5, 25)
    rows = sweep_a(sc, grid, args.reps, args.seed, args.workers or 1)
    _emit(format_rows(rows, args.format or "csv"), args.out)
    return EXIT_OK


def _cmd_verify(args):
    sc = _scenario(args)
    res = verify(sc, args.reps, args.seed, g=args.g, t=args.t, workers=args.workers or 1)
    payload = {"p": sc.p, "m": sc.m, "rho": sc.rho, "g": args.g, **res.to_dict()}
    if args.format == "json":
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(
            f"p={sc.p} m={sc.m} rho={sc.rho} G={args.g} reps={res.reps} seed={res.seed}\n"
            f"{'lhs':>12} {'rhs':>12}\n"
            f"{res.lhs:12.6g} {res.rhs:12.6g}\n"
            f"{res.lhs_se:12.3g} {res.rhs_se:12.3g}  (std err)\n"
            f"{res.verdict} at 3 combined std errors ({res.combined_se:.3g})\n"
        )
    if args.out:
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_NUMERICAL if (args.strict and not res.passed) else EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep-t": _cmd_sweep_t, "sweep-a": _cmd_sweep_a, "verify": _cmd_verify}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
