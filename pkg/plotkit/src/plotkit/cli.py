"""Command line front end: plotkit plot --summary <path> --out <png>."""

from __future__ import annotations

import argparse
import sys

from plotkit.render import PlotSpec, render_curves


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="Render cumulative-utility figures from summary.json files.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    plot = commands.add_parser("plot", help="render one summary into one PNG")
    plot.add_argument("--summary", required=True, help="path to summary.json")
    plot.add_argument("--out", required=True, help="output PNG path")
    plot.add_argument(
        "--algorithms",
        default=None,
        help="comma-separated algorithm tags to draw (default: all, sorted)",
    )
    plot.add_argument(
        "--label",
        action="append",
        default=[],
        metavar="TAG=TEXT",
        help="legend label override, repeatable",
    )
    return parser


def _parse_labels(pairs) -> dict:
    labels = {}
    for pair in pairs:
        tag, separator, text = pair.partition("=")
        if not separator or not tag:
            raise ValueError(f"label override {pair!r} is not TAG=TEXT")
        labels[tag] = text
    return labels


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        algorithms = (
            tuple(tag for tag in args.algorithms.split(",") if tag)
            if args.algorithms
            else None
        )
        path = render_curves(
            PlotSpec(
                summary_path=args.summary,
                output_path=args.out,
                algorithms=algorithms,
                labels=_parse_labels(args.label),
            )
        )
    except (ValueError, OSError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
