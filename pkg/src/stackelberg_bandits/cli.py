"""Command line front end: run experiments, recompute regret, dump menus."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from stackelberg_bandits.game import GameSpec
from stackelberg_bandits.geometry import approximate_extreme_points
from stackelberg_bandits.harness import offline_regret, run_experiment


def parse_seed_list(text: str) -> list:
    """Accept "0..9" (inclusive range), "0,3,7", or a single integer."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"seed range {text!r} is empty")
        return list(range(lo, hi + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def _cmd_run(args) -> int:
    seeds = parse_seed_list(args.seeds) if args.seeds else None
    summary = run_experiment(args.config, output_dir=args.out or None, seeds=seeds)
    print(f"wrote summary for {summary['name']} ({summary['kind']}, T={summary['horizon']})")
    for tag, series in sorted(summary["algorithms"].items()):
        print(
            f"  {tag}: final mean utility {series['mean_cum_utility'][-1]:.3f}, "
            f"final mean regret {series['mean_cum_regret'][-1]:.3f}"
        )
    return 0


def _cmd_regret(args) -> int:
    results = offline_regret(args.log, delta=args.delta)
    if not results:
        print(f"no episode CSVs found under {args.log}", file=sys.stderr)
        return 1
    print(json.dumps(results, sort_keys=True, indent=1))
    return 0


def _cmd_dump_menu(args) -> int:
    with open(args.game) as handle:
        game = GameSpec.from_json(handle.read())
    z = np.array([float(v) for v in args.context.split(",")], dtype=float)
    delta = args.delta if args.delta else 0.001
    menu = approximate_extreme_points(game, z, delta)
    print(menu.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stackelberg-bandits",
        description="Menu-based commitment learning: experiments and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config end to end")
    run_p.add_argument("--config", required=True, help="path to a JSON experiment config")
    run_p.add_argument("--seeds", default="", help='override seeds, e.g. "0..9" or "0,3,7"')
    run_p.add_argument("--out", default="", help="override the config's output directory")
    run_p.set_defaults(func=_cmd_run)

    regret_p = sub.add_parser("regret", help="recompute hindsight regret from saved logs")
    regret_p.add_argument("--log", required=True, help="results directory with CSVs and JSONs")
    regret_p.add_argument("--delta", type=float, default=None, help="menu tolerance override")
    regret_p.set_defaults(func=_cmd_regret)

    dump_p = sub.add_parser("dump-menu", help="print the strategy menu at one context")
    dump_p.add_argument("--game", required=True, help="path to a game JSON file")
    dump_p.add_argument("--context", required=True, help="comma-separated context values")
    dump_p.add_argument("--delta", type=float, default=None, help="menu tolerance (default 0.001)")
    dump_p.set_defaults(func=_cmd_dump_menu)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
