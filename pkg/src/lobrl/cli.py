"""Command-line entry point for the three-stage pipeline plus data utilities.

Subcommands: synth, sample, train, tune, test, report. A YAML config file
drives each run; the flags --scenario, --seed, --jobs and --out override the
corresponding config keys.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from lobrl import pipeline
from lobrl.book import DataError
from lobrl.policy import NumericalError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lobrl",
        description="PPO trading agents on depth-10 limit order book data",
    )
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--scenario", choices=("c201", "c202", "c203"))
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--out", help="output directory")

    for name, help_text in (
        ("synth", "generate synthetic days as orderbook CSVs"),
        ("sample", "construct and subsample training windows"),
        ("train", "train the checkpoint ensemble (resumable by member)"),
        ("tune", "optimize learning rate and entropy coefficient"),
        ("test", "backtest the ensemble and export report files"),
    ):
        p = sub.add_parser(name, help=help_text)
        add_common(p)
        if name == "train":
            p.add_argument("--manifest", help="window manifest (default: <out>/manifest.json)")
            p.add_argument("--ensemble", type=int, help="ensemble size override")
        if name == "tune":
            p.add_argument("--manifest")
            p.add_argument("--budget", type=int)
        if name == "test":
            p.add_argument("--checkpoints", nargs="*", help="explicit checkpoint files")

    p = sub.add_parser("report", help="recompute summary statistics from a trades CSV")
    p.add_argument("--trades", required=True)
    p.add_argument("--out", required=True, help="output summary JSON path")
    return parser


def _config_from_args(args) -> pipeline.RunConfig:
    overrides = {
        "scenario": getattr(args, "scenario", None),
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", None),
        "out": getattr(args, "out", None),
        "ensemble": getattr(args, "ensemble", None),
        "budget": getattr(args, "budget", None),
    }
    return pipeline.load_config(getattr(args, "config", None), overrides)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses status 2 for usage errors; this tool reserves 2 for data errors
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))

    try:
        if args.command == "report":
            path = pipeline.cmd_report(args.trades, args.out)
            print(path)
            return EXIT_OK
        cfg = _config_from_args(args)
        if args.command == "synth":
            print(pipeline.cmd_synth(cfg))
        elif args.command == "sample":
            print(pipeline.cmd_sample(cfg))
        elif args.command == "train":
            for p in pipeline.cmd_train(cfg, manifest_path=args.manifest):
                print(p)
        elif args.command == "tune":
            print(pipeline.cmd_tune(cfg, manifest_path=args.manifest))
        elif args.command == "test":
            paths = pipeline.cmd_test(cfg, checkpoint_paths=args.checkpoints or None)
            for p in paths.values():
                print(p)
        return EXIT_OK
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
