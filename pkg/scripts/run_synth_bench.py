#!/usr/bin/env python3
"""Run one of the pinned synthetic benchmark presets.

Thin wrapper over `partcrop synth-bench`; exists so the benchmarks can
be launched without installing the console script.

    python3 scripts/run_synth_bench.py gap03 --out runs/gap03
"""

import argparse
import sys

from partcrop.cli import main
from partcrop.presets import PRESETS


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("preset", choices=sorted(PRESETS))
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the preset seed")
    parser.add_argument("--jobs", type=int, default=None, help="feature-generation workers")
    return parser.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    argv = ["synth-bench", "--preset", args.preset, "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.jobs is not None:
        argv += ["--jobs", str(args.jobs)]
    sys.exit(main(argv))
