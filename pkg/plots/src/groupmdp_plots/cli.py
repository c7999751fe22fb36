"""Figure CLI: ``plot <kind> --csv <path> --out <path>``.

Exit codes: 0 success, 1 runtime failure, 2 invalid input (unknown kind,
unreadable CSV, schema mismatch naming the offending column).
"""
from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, PlotSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render groupmdp harness CSVs into figures.",
    )
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("--csv", required=True, help="harness CSV input")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default=None)
    parser.add_argument("--linear-x", action="store_true",
                        help="disable the log-scaled sample axis (fig2 only)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(
        kind=args.kind,
        csv_path=args.csv,
        out_path=args.out,
        title=args.title,
        log_x=not args.linear_x,
    )
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: cannot open {exc.filename}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
