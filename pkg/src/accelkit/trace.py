"""Run traces and their CSV serialization.

A Trace holds one row per iterate (row 0 is the initial guess), plus run-level
metadata that never leaves memory.  The CSV schema is a fixed eleven-column
contract shared with external tooling; it is written with 17 significant
digits so a re-run with identical inputs diffs clean.

Column semantics, by row index k (the iterate index):

* ``g_norm_vprime``   monitored residual norm ||g(u_k)||; the column name
  reflects the default dual norm on the flow problem, for linear problems the
  monitor is plain l2.
* ``picard_resid_h1`` ||q(u_k) - u_k|| in the map norm; computed during step
  k, so the final row holds nan (no step was taken from it).
* ``theta``, ``gamma``, ``max_abs_alpha``  diagnostics of the least-squares
  solve that PRODUCED iterate k; nan on row 0.  For Anderson runs theta is
  measured in the map norm (see Trace.theta_label) and gamma is nan.
* ``ratio``           g_norm[k] / g_norm[k-1]; nan on row 0.
* ``depth_used``      min(k, depth cap at that point of the run).
* ``q_solves``, ``riesz_solves``  cumulative counts after producing iterate k.
* ``wall_ms``         time spent producing iterate k (row 0: setup time).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = ["TRACE_COLUMNS", "IterationRecord", "Trace",
           "write_trace_csv", "read_trace_csv"]

TRACE_COLUMNS = ("k", "g_norm_vprime", "picard_resid_h1", "theta", "gamma",
                 "ratio", "depth_used", "max_abs_alpha", "q_solves",
                 "riesz_solves", "wall_ms")

_INT_COLUMNS = frozenset({"k", "depth_used", "q_solves", "riesz_solves"})


@dataclass
class IterationRecord:
    k: int
    g_norm_vprime: float
    picard_resid_h1: float
    theta: float
    gamma: float
    ratio: float
    depth_used: int
    max_abs_alpha: float
    q_solves: int
    riesz_solves: int
    wall_ms: float


@dataclass
class Trace:
    """One solver run: per-iterate records plus run-level metadata.

    ``status`` is one of converged, diverged, max_iter,
    linear_solve_failure, or unknown (for traces read back from CSV, which
    does not carry status).
    """

    method: str = "unknown"
    records: list = field(default_factory=list)
    status: str = "unknown"
    # in-memory extras, not serialized
    final_iterate: np.ndarray | None = None
    final_m: float = 0
    trigger_rows: list = field(default_factory=list)
    g_evals: int = 0
    alpha_form_gap: float = 0.0
    theta_label: str = "theta"

    @property
    def iterations(self):
        return len(self.records) - 1

    @property
    def final_g_norm(self):
        return self.records[-1].g_norm_vprime

    def column(self, name):
        if name not in TRACE_COLUMNS:
            raise KeyError(f"unknown trace column {name!r}")
        values = [getattr(r, name) for r in self.records]
        dtype = np.int64 if name in _INT_COLUMNS else np.float64
        return np.asarray(values, dtype=dtype)


def _format_cell(name, value):
    if name in _INT_COLUMNS:
        return str(int(value))
    return format(float(value), ".16e")  # nan renders as "nan"


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace.records:
            writer.writerow(_format_cell(c, getattr(rec, c))
                            for c in TRACE_COLUMNS)


def read_trace_csv(path):
    """Parse a trace CSV back into a Trace (metadata fields stay defaults)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ValueError(
                f"{path}: header does not match the trace schema")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected "
                                 f"{len(TRACE_COLUMNS)} cells, got {len(row)}")
            kwargs = {}
            for name, cell in zip(TRACE_COLUMNS, row):
                kwargs[name] = int(cell) if name in _INT_COLUMNS \
                    else float(cell)
            records.append(IterationRecord(**kwargs))
    return Trace(records=records)
