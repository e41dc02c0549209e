"""Command-line front end: plotkit <panel> --traces a.csv [b.csv ...] --out fig.ext."""

import argparse
import sys

from . import PANELS, FigureSpec, PlotkitError, render


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="render solver trace CSV files into figures",
        allow_abbrev=False)
    parser.add_argument("panel", choices=PANELS)
    parser.add_argument("--traces", nargs="+", required=True,
                        metavar="CSV", help="one or more trace files")
    parser.add_argument("--out", required=True,
                        help="output image path (suffix picks the format)")
    parser.add_argument("--labels", nargs="+", default=None,
                        help="legend labels, one per trace")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(traces=args.traces, panel=args.panel,
                      out=args.out, labels=args.labels)
    try:
        render(spec)
    except PlotkitError as err:
        print(f"plotkit: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
