"""Command line interface: run, validate, and list experiment configs."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from .experiments import EXPERIMENTS, ConfigError, run_experiment_config, validate_config


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(p) as fh:
        config = yaml.safe_load(fh)
    if not isinstance(config, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pbtlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config")
    run_p.add_argument("--out", default=None, help="output directory override")
    run_p.add_argument("--seeds", default=None, help="comma-separated seed list override")

    val_p = sub.add_parser("validate", help="schema-check a config without running it")
    val_p.add_argument("config")

    sub.add_parser("list-experiments", help="list available experiment ids")

    args = parser.parse_args(argv)

    if args.command == "list-experiments":
        for name in sorted(EXPERIMENTS):
            print(name)
        return 0

    try:
        config = _load_config(args.config)
        if args.command == "validate":
            validate_config(config)
            print("ok")
            return 0
        seeds = None
        if args.seeds:
            seeds = [int(s) for s in args.seeds.split(",")]
        outdir = Path(args.out) if args.out else Path(f"{Path(args.config).stem}_out")
        validate_config(config)
        summary = run_experiment_config(config, outdir, seeds_override=seeds)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"experiment {summary['experiment']}: {'PASS' if summary['passed'] else 'FAIL'}")
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
