#!/usr/bin/env python3
"""Run a full attack from a JSON config file.

    python3 scripts/run_attack.py configs/my_run.json --out runs/my_run

Writes config.json, report.csv, report.json, summary.json, per-seed
attacker weights, and training histories into --out.
"""

import argparse
import sys

from partcrop.cli import main


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("config", help="path to a run config JSON file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--jobs", type=int, default=None, help="feature-generation workers")
    return parser.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    argv = ["attack", "--config", args.config, "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.jobs is not None:
        argv += ["--jobs", str(args.jobs)]
    sys.exit(main(argv))
