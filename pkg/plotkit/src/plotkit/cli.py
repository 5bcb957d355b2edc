"""Command line front end: one panel per invocation.

    plotkit --panel timeseries --out fig.png run/timeseries.csv
"""

from __future__ import annotations

import argparse
import sys

from plotkit.panels import PANEL_KINDS, PanelSpec, render
from plotkit.schema import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotkit", description="render figure panels from simulator CSVs"
    )
    parser.add_argument("inputs", nargs="+", help="input CSV file(s)")
    parser.add_argument("--panel", required=True, choices=PANEL_KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument(
        "--band-scale",
        type=float,
        default=1.0,
        help="multiply the std band for visibility (annotated on the plot)",
    )
    parser.add_argument("--format", default="png", choices=("png", "svg", "pdf"))
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        spec = PanelSpec(
            kind=args.panel,
            inputs=tuple(args.inputs),
            out=args.out,
            band_scale=args.band_scale,
            fmt=args.format,
            dpi=args.dpi,
        )
        path = render(spec)
    except (OSError, SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
