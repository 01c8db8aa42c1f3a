"""Command line entry: ``partcrop-shim serve``.

Exit codes: 0 clean exit, 2 bad config or checkpoint load failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ShimConfig
from .encoder import CheckpointError, TorchEncoder
from .serve import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partcrop-shim")
    sub = parser.add_subparsers(dest="command", required=True)
    sv = sub.add_parser("serve", help="answer exchange rounds in a watch directory")
    sv.add_argument("watch_dir", nargs="?", help="exchange root (round_*/ appear here)")
    sv.add_argument("--config", help="JSON file of ShimConfig fields")
    sv.add_argument("--model", help="torchvision model name")
    sv.add_argument("--weights", choices=["pretrained", "random", "auto"])
    sv.add_argument("--device")
    sv.add_argument("--input-size", type=int, dest="input_size")
    sv.add_argument("--poll", type=float, dest="poll_s")
    sv.add_argument("--init-seed", type=int, dest="init_seed")
    sv.add_argument("--idle-timeout", type=float, default=None)
    sv.add_argument("--max-rounds", type=int, default=None)
    return parser


def _merge_config(args: argparse.Namespace) -> ShimConfig:
    doc: dict = {}
    if args.config:
        doc.update(json.loads(open(args.config).read()))
    if args.watch_dir:
        doc["watch_dir"] = args.watch_dir
    for key in ("model", "weights", "device", "input_size", "poll_s", "init_seed"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if "watch_dir" not in doc:
        raise ValueError("watch_dir required (positional or in --config)")
    if "mean" in doc:
        doc["mean"] = tuple(doc["mean"])
    if "std" in doc:
        doc["std"] = tuple(doc["std"])
    return ShimConfig(**doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        encoder = TorchEncoder(cfg)
    except (ValueError, CheckpointError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"serving {cfg.watch_dir} with {cfg.model} "
        f"[{encoder.weights_used}] N={encoder.grid_n} D={encoder.dim}",
        file=sys.stderr,
    )
    serve(cfg, encoder, max_rounds=args.max_rounds, idle_timeout=args.idle_timeout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
