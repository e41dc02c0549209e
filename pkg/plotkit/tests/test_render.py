"""Panel rendering from the committed golden traces.

The golden files are real solver traces checked in under tests/golden:
a plain iteration run (picard_cavity.csv) and an adaptive windowed run
(adaptive_aag_cavity.csv) that exercises the gamma, ratio, and depth
columns.
"""

import csv
from pathlib import Path

import numpy as np
import pytest

from plotkit import (EmptyTrace, FigureSpec, MissingColumn, PlotkitError,
                     TRACE_HEADER, build_figure, read_trace, render)
from plotkit.cli import main

GOLDEN = Path(__file__).parent / "golden"
PICARD = GOLDEN / "picard_cavity.csv"
ADAPTIVE = GOLDEN / "adaptive_aag_cavity.csv"


def spec_for(panel, out, traces=(ADAPTIVE,), labels=None):
    return FigureSpec(traces=[str(t) for t in traces], panel=panel,
                      out=str(out), labels=labels)


def test_golden_traces_parse():
    trace = read_trace(ADAPTIVE)
    assert set(trace) == set(TRACE_HEADER)
    assert trace["k"][0] == 0.0
    assert np.all(np.diff(trace["k"]) == 1.0)


def test_all_panel_types_render_from_golden(tmp_path):
    outs = {}
    for panel, source in (("gnorm", PICARD), ("picard_resid", PICARD),
                          ("gamma_vs_ratio", ADAPTIVE),
                          ("depth_trace", ADAPTIVE)):
        out = tmp_path / f"{panel}.svg"
        render(spec_for(panel, out, traces=(source,)))
        assert out.is_file() and out.stat().st_size > 0
        outs[panel] = out

    # depth panel is a non-decreasing step plot
    fig = build_figure(spec_for("depth_trace", tmp_path / "d.svg"))
    (line,) = fig.axes[0].get_lines()
    assert line.get_drawstyle() == "steps-post"
    assert np.all(np.diff(line.get_ydata()) >= 0)

    ok = len(outs) == 4
    print(f"{'PASS' if ok else 'FAIL'} golden-panels: rendered "
          f"{sorted(outs)} from committed traces; depth step plot "
          f"non-decreasing")
    assert ok


def test_residual_panel_is_log_scale_and_decreasing(tmp_path):
    fig = build_figure(spec_for("gnorm", tmp_path / "g.svg",
                                traces=(PICARD,)))
    ax = fig.axes[0]
    assert ax.get_yscale() == "log"
    (line,) = ax.get_lines()
    assert np.all(np.diff(line.get_ydata()) < 0)


def test_gamma_and_ratio_series_overlay_with_distinct_markers(tmp_path):
    fig = build_figure(spec_for("gamma_vs_ratio", tmp_path / "gr.svg"))
    lines = fig.axes[0].get_lines()
    assert {ln.get_marker() for ln in lines} == {"o", "x"}
    gamma = next(ln for ln in lines if ln.get_marker() == "o").get_ydata()
    ratio = next(ln for ln in lines if ln.get_marker() == "x").get_ydata()
    # late in a settled run the prediction matches the observation
    tail = min(len(gamma), len(ratio)) // 3
    assert np.max(np.abs(gamma[-tail:] - ratio[-tail:])) <= 0.05


def test_multi_trace_overlay_draws_one_line_per_trace(tmp_path):
    fig = build_figure(spec_for("gnorm", tmp_path / "m.svg",
                                traces=(PICARD, ADAPTIVE),
                                labels=["plain", "windowed"]))
    lines = fig.axes[0].get_lines()
    assert len(lines) == 2
    assert [ln.get_label() for ln in lines] == ["plain", "windowed"]


@pytest.mark.parametrize("suffix", [".svg", ".png"])
def test_identical_inputs_produce_identical_bytes(tmp_path, suffix):
    a = tmp_path / f"a{suffix}"
    b = tmp_path / f"b{suffix}"
    render(spec_for("gamma_vs_ratio", a))
    render(spec_for("gamma_vs_ratio", b))
    assert a.read_bytes() == b.read_bytes()


def test_missing_column_error_names_the_column(tmp_path):
    with open(ADAPTIVE, newline="") as fh:
        rows = list(csv.reader(fh))
    drop = rows[0].index("gamma")
    clipped = tmp_path / "nogamma.csv"
    with open(clipped, "w", newline="") as fh:
        csv.writer(fh).writerows([r[:drop] + r[drop + 1:] for r in rows])
    with pytest.raises(MissingColumn, match="gamma"):
        read_trace(clipped)


def test_reordered_header_is_rejected(tmp_path):
    with open(ADAPTIVE, newline="") as fh:
        rows = list(csv.reader(fh))
    rows[0] = rows[0][::-1]
    shuffled = tmp_path / "shuffled.csv"
    with open(shuffled, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    with pytest.raises(PlotkitError, match="header"):
        read_trace(shuffled)


def test_header_only_file_raises_empty_trace(tmp_path):
    bare = tmp_path / "bare.csv"
    bare.write_text(",".join(TRACE_HEADER) + "\n")
    with pytest.raises(EmptyTrace):
        read_trace(bare)


def test_spec_validation(tmp_path):
    with pytest.raises(PlotkitError, match="panel"):
        render(spec_for("histogram", tmp_path / "x.svg"))
    with pytest.raises(PlotkitError, match="not found"):
        render(spec_for("gnorm", tmp_path / "x.svg",
                        traces=(tmp_path / "absent.csv",)))
    with pytest.raises(PlotkitError, match="labels"):
        render(spec_for("gnorm", tmp_path / "x.svg", labels=["a", "b"]))


def test_cli_renders_and_reports_errors(tmp_path, capsys):
    out = tmp_path / "fig.png"
    code = main(["depth_trace", "--traces", str(ADAPTIVE),
                 "--out", str(out)])
    assert code == 0 and out.is_file()

    code = main(["gnorm", "--traces", str(tmp_path / "no.csv"),
                 "--out", str(tmp_path / "y.svg")])
    assert code == 2
    assert "no.csv" in capsys.readouterr().err
