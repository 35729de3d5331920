from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiment import (
    ACCURACY_COLUMNS,
    SCALABILITY_COLUMNS,
    MissingModelError,
    build_model,
    rows_to_csv,
    run_accuracy_sweep,
    run_scalability_sweep,
)
from .selftest import run_selftest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airsplit", description="Analog vs digital split-learning inference simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one split model per agent count")
    train.add_argument("--config", required=True)
    train.add_argument("--models", required=True, help="directory for trained models")

    acc = sub.add_parser("accuracy", help="test accuracy vs SNR sweep")
    acc.add_argument("--config", required=True)
    acc.add_argument("--out", required=True, help="CSV output path")
    acc.add_argument("--models", help="directory of trained models to reuse")
    acc.add_argument("--no-train", action="store_true", help="fail instead of training missing models")

    scal = sub.add_parser("scalability", help="completed tasks vs M under CU budgets")
    scal.add_argument("--config", required=True)
    scal.add_argument("--out", required=True, help="CSV output path")

    sub.add_parser("selftest", help="run the fast invariant checks")

    for p in (train, acc, scal):
        p.add_argument("--seed", type=int, help="override the config seed")
    return parser


def _manifest(command: str, cfg) -> None:
    print(json.dumps({"command": command, "seed": cfg.seed, "config_hash": cfg.digest()}))


def _write_csv(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "selftest":
        return 0 if run_selftest() else 1

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"airsplit: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg.seed = args.seed
    _manifest(args.command, cfg)

    if args.command == "train":
        for i, m in enumerate(cfg.agents):
            build_model(cfg, m, i, model_dir=args.models)
        return 0
    if args.command == "accuracy":
        try:
            rows = run_accuracy_sweep(cfg, args.models, allow_train=not args.no_train)
        except MissingModelError as exc:
            print(f"airsplit: {exc}", file=sys.stderr)
            return 1
        _write_csv(args.out, rows_to_csv(ACCURACY_COLUMNS, rows))
        return 0
    if args.command == "scalability":
        _write_csv(args.out, rows_to_csv(SCALABILITY_COLUMNS, run_scalability_sweep(cfg)))
        return 0
    parser.error(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
