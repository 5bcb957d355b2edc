"""Command line interface.

Subcommands map onto the scenarios: simulate, estimate, sensitivity,
noise-sweep, oracle, validate.  Exit codes: 0 ok, 1 usage or configuration
error, 2 validation failure, 3 runtime error.  ``--threads`` only changes
wall time, never results.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from relaymag.config import ConfigError, load_config
from relaymag.scenarios import ValidationFailure, run_scenario

_SUBCOMMANDS = {
    "simulate": "timeseries",
    "estimate": "estimate",
    "sensitivity": "sensitivity",
    "noise-sweep": "noise_sweep",
    "oracle": "oracle_check",
    "validate": "validate",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaymag",
        description="DC magnetometry simulator with dynamical decoupling "
        "and phase-relay readout",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenario in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {scenario} scenario")
        p.add_argument("--config", required=True, help="path to a run config file")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument(
            "--threads", type=int, default=None, help="worker threads (speed only)"
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0

    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    out_dir = args.out if args.out is not None else cfg.out

    try:
        result = run_scenario(cfg, _SUBCOMMANDS[args.command], out_dir)
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 3

    for key, value in sorted(result.summary.items()):
        if key != "checks":
            print(f"{key}: {value}")
    for path in result.files:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
