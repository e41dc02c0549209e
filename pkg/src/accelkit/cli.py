"""Command-line experiment runner: single runs and one-key sweeps.

A run writes runs/<name>/{trace.csv, summary.txt, config.resolved}; a sweep
adds one such directory per value plus a comparison.csv at its root.  The
output root is ./runs unless the ACCELKIT_OUT environment variable names
another directory.  Exit status is 0 for a converged run; other outcomes
map to distinct nonzero codes so shell scripts can branch on them.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .acceleration import run_solver
from .config import (SolverConfig, _parse_value, format_resolved,
                     merge_overrides, parse_config_file)
from .exceptions import ConfigError
from .problems import cavity_problem, quadratic_toy, richardson_problem
from .trace import _format_cell, write_trace_csv

__all__ = ["main", "EXIT_CODES"]

EXIT_CONFIG = 2
EXIT_CODES = {"converged": 0, "diverged": 3, "max_iter": 4,
              "linear_solve_failure": 5}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="accelkit",
        description="Run configured fixed-point solves and sweeps.",
        allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one configured solve",
                           allow_abbrev=False)
    _add_config_flags(run_p)

    sweep_p = sub.add_parser(
        "sweep", help="repeat a base config while varying one key",
        allow_abbrev=False)
    _add_config_flags(sweep_p)
    sweep_p.add_argument("--vary", required=True,
                         choices=("method", "depth", "Re"))
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated values for the varied key")
    return parser


def _add_config_flags(parser):
    parser.add_argument("--config",
                        help="key = value file consulted before defaults")
    parser.add_argument("--name",
                        help="output directory name (default: timestamp)")
    for f in dataclasses.fields(SolverConfig):
        parser.add_argument(f"--{f.name}", dest=f"cfg_{f.name}",
                            metavar="VALUE")


def _config_from_args(args):
    file_values = parse_config_file(args.config) if args.config else {}
    cli_values = {}
    for f in dataclasses.fields(SolverConfig):
        raw = getattr(args, f"cfg_{f.name}")
        if raw is not None:
            cli_values[f.name] = _parse_value(f.name, raw, f"--{f.name}")
    return merge_overrides(file_values, cli_values)


def _output_root():
    return Path(os.environ.get("ACCELKIT_OUT") or "runs")


def _make_run_dir(root, name):
    root.mkdir(parents=True, exist_ok=True)
    if name:
        path = root / name
        path.mkdir(parents=True, exist_ok=True)
        return path
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = root / stamp
    bump = 0
    while path.exists():
        bump += 1
        path = root / f"{stamp}-{bump}"
    path.mkdir(parents=True)
    return path


def _tridiagonal(n):
    a = np.zeros((n, n))
    idx = np.arange(n)
    a[idx, idx] = 2.0
    a[idx[:-1], idx[:-1] + 1] = -1.0
    a[idx[1:], idx[1:] - 1] = -1.0
    return a


def _build_problem(config):
    if config.problem == "richardson":
        b = np.zeros(config.n)
        b[0] = 1.0
        return richardson_problem(_tridiagonal(config.n), b, config.omega)
    if config.problem == "toy":
        return quadratic_toy(config.n, seed=config.seed)
    return cavity_problem(config.N, config.Re)


def _format_summary(trace):
    resid = trace.column("picard_resid_h1")
    finite = resid[np.isfinite(resid)]
    last_resid = float(finite[-1]) if finite.size else math.nan
    lines = [
        f"status = {trace.status}",
        f"iterations = {trace.iterations}",
        "final_g_norm_vprime = "
        + _format_cell("g_norm_vprime", trace.final_g_norm),
        "final_picard_resid_h1 = "
        + _format_cell("picard_resid_h1", last_resid),
        f"q_solves = {int(trace.column('q_solves')[-1])}",
        f"riesz_solves = {int(trace.column('riesz_solves')[-1])}",
    ]
    return "\n".join(lines) + "\n"


def _execute(config, run_dir):
    problem = _build_problem(config)
    trace = run_solver(problem, config)
    write_trace_csv(trace, run_dir / "trace.csv")
    (run_dir / "summary.txt").write_text(_format_summary(trace))
    (run_dir / "config.resolved").write_text(format_resolved(config))
    return trace


def _cmd_run(args):
    config = _config_from_args(args)
    run_dir = _make_run_dir(_output_root(), args.name)
    trace = _execute(config, run_dir)
    print(f"{trace.status}: {trace.iterations} iterations, final g-norm "
          f"{trace.final_g_norm:.3e} -> {run_dir}")
    return EXIT_CODES.get(trace.status, 1)


def _sweep_one(base, vary, token, sweep_dir):
    """Run one sweep point; a failure becomes a row, never an abort."""
    run_dir = sweep_dir / f"{vary}={token}"
    run_dir.mkdir(parents=True, exist_ok=True)
    try:
        value = _parse_value(vary, token, f"--values[{vary}]")
        config = dataclasses.replace(base, **{vary: value}).validate()
        trace = _execute(config, run_dir)
    except Exception as err:
        (run_dir / "error.txt").write_text(f"{type(err).__name__}: {err}\n")
        return token, f"error:{type(err).__name__}", "", ""
    return (token, trace.status, str(trace.iterations),
            _format_cell("g_norm_vprime", trace.final_g_norm))


def _cmd_sweep(args):
    base = _config_from_args(args)
    tokens = [t.strip() for t in args.values.split(",") if t.strip()]
    if not tokens:
        raise ConfigError("values: must list at least one value")
    sweep_dir = _make_run_dir(_output_root(), args.name)
    rows = [_sweep_one(base, args.vary, token, sweep_dir)
            for token in tokens]
    table = ["value,status,iterations,final_g_norm"]
    table += [",".join(row) for row in rows]
    (sweep_dir / "comparison.csv").write_text("\n".join(table) + "\n")
    print(f"{len(rows)} runs -> {sweep_dir}")
    return 0 if all(row[1] == "converged" for row in rows) else 1


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
