"""Render solver-trace CSV files into figures.

A trace file is a CSV whose header is exactly

    k,g_norm_vprime,picard_resid_h1,theta,gamma,ratio,depth_used,
    max_abs_alpha,q_solves,riesz_solves,wall_ms

(one line, no spaces).  Four panels are supported: ``gnorm`` and
``picard_resid`` draw the named column against k on a log y axis,
``gamma_vs_ratio`` overlays the rate predictor with the observed
contraction ratio using distinct markers, and ``depth_trace`` draws the
window depth as a step plot.

Rendering is a pure function of the CSV bytes and the FigureSpec:
embedded SVG dates are suppressed and the SVG id hash salt is pinned, so
identical inputs produce identical output bytes.
"""

from dataclasses import dataclass
from pathlib import Path
import csv

import matplotlib
import numpy as np

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402  (backend must be set first)

__version__ = "0.1.0"

TRACE_HEADER = (
    "k", "g_norm_vprime", "picard_resid_h1", "theta", "gamma", "ratio",
    "depth_used", "max_abs_alpha", "q_solves", "riesz_solves", "wall_ms",
)

PANELS = ("gnorm", "picard_resid", "gamma_vs_ratio", "depth_trace")

_PANEL_COLUMN = {"gnorm": "g_norm_vprime", "picard_resid": "picard_resid_h1"}
_PANEL_YLABEL = {
    "gnorm": "residual norm",
    "picard_resid": "fixed-point residual",
    "gamma_vs_ratio": "contraction per step",
    "depth_trace": "window depth",
}


class PlotkitError(Exception):
    """Base error for trace parsing and figure specs."""


class MissingColumn(PlotkitError):
    def __init__(self, column, path):
        self.column = column
        super().__init__(f"{path}: trace header is missing column {column!r}")


class EmptyTrace(PlotkitError):
    def __init__(self, path):
        super().__init__(f"{path}: trace has a header but no rows")


@dataclass
class FigureSpec:
    """One figure: trace paths, a panel name, optional labels, output path."""

    traces: list
    panel: str
    out: str
    labels: list | None = None

    def validate(self):
        if self.panel not in PANELS:
            raise PlotkitError(
                f"unknown panel {self.panel!r}, expected one of {PANELS}")
        if not self.traces:
            raise PlotkitError("spec lists no trace files")
        if self.labels is not None and len(self.labels) != len(self.traces):
            raise PlotkitError(
                f"{len(self.labels)} labels for {len(self.traces)} traces")
        for path in self.traces:
            if not Path(path).is_file():
                raise PlotkitError(f"trace file not found: {path}")


def read_trace(path):
    """Parse one trace CSV into a dict of float columns.

    The header must match TRACE_HEADER exactly; a missing name raises
    MissingColumn, any other deviation a generic PlotkitError.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyTrace(path)
    header = tuple(rows[0])
    if header != TRACE_HEADER:
        for name in TRACE_HEADER:
            if name not in header:
                raise MissingColumn(name, path)
        raise PlotkitError(
            f"{path}: trace header does not match the contract: {header}")
    body = rows[1:]
    if not body:
        raise EmptyTrace(path)
    table = np.empty((len(body), len(TRACE_HEADER)))
    for i, row in enumerate(body):
        if len(row) != len(TRACE_HEADER):
            raise PlotkitError(f"{path}: row {i + 1} has {len(row)} cells")
        table[i] = [float(cell) for cell in row]
    return {name: table[:, j] for j, name in enumerate(TRACE_HEADER)}


def _finite_positive(k, values):
    mask = np.isfinite(values) & (values > 0.0)
    return k[mask], values[mask]


def build_figure(spec):
    """Assemble the matplotlib Figure for a validated spec."""
    data = [read_trace(p) for p in spec.traces]
    labels = (list(spec.labels) if spec.labels is not None
              else [Path(p).stem for p in spec.traces])

    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.subplots()

    if spec.panel in ("gnorm", "picard_resid"):
        column = _PANEL_COLUMN[spec.panel]
        for label, trace in zip(labels, data):
            k, vals = _finite_positive(trace["k"], trace[column])
            ax.semilogy(k, vals, marker=".", label=label)
    elif spec.panel == "gamma_vs_ratio":
        for label, trace in zip(labels, data):
            k = trace["k"]
            for name, marker, style in (("gamma", "o", "-"),
                                        ("ratio", "x", "--")):
                mask = np.isfinite(trace[name])
                ax.plot(k[mask], trace[name][mask], marker=marker,
                        linestyle=style, fillstyle="none",
                        label=f"{label} {name}")
    else:
        for label, trace in zip(labels, data):
            ax.step(trace["k"], trace["depth_used"], where="post",
                    label=label)
        ax.yaxis.get_major_locator().set_params(integer=True)

    ax.set_xlabel("iteration k")
    ax.set_ylabel(_PANEL_YLABEL[spec.panel])
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def render(spec):
    """Render the figure and write it to spec.out; returns the path."""
    spec.validate()
    fig = build_figure(spec)
    out = Path(spec.out)
    suffix = out.suffix.lower()
    metadata = None
    if suffix == ".svg":
        metadata = {"Date": None}
    elif suffix == ".pdf":
        metadata = {"CreationDate": None}
    with matplotlib.rc_context({"svg.hashsalt": "plotkit"}):
        fig.savefig(out, metadata=metadata)
    return out
