#!/usr/bin/env python3
"""Answer exchange-directory requests with pixel-keyed random features.

Protocol demo only: responses are deterministic functions of the pixel
bytes, so reruns are reproducible, but they carry no membership signal.
Point it at the same directory as `encoder.exchange_dir` in a run
config, e.g.

    python3 scripts/serve_exchange_demo.py /tmp/exchange --dim 64 &
    partcrop attack --config configs/exchange_run.json --out runs/demo

Rounds appear as round_NNNNN/request/request.json; the responder writes
one .pctf per item into round_NNNNN/response/ and touches done.marker
last.  Images [H,W,3] map to [map_rows, dim] feature maps, crops to
[dim] pooled vectors.
"""

import argparse
import hashlib
import json
import time
from pathlib import Path

import numpy as np

from partcrop.tensorio import read_tensor, write_tensor


def pixel_seed(t: np.ndarray) -> int:
    digest = hashlib.blake2b(t.tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def respond(t: np.ndarray, kind: str, dim: int, map_rows: int) -> np.ndarray:
    rng = np.random.default_rng(pixel_seed(t))
    if kind == "image":
        rows = rng.standard_normal((map_rows, dim))
        return (rows / np.linalg.norm(rows, axis=1, keepdims=True)).astype(np.float32)
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def serve_round(round_dir: Path, dim: int, map_rows: int) -> int:
    request_dir = round_dir / "request"
    response_dir = round_dir / "response"
    manifest = json.loads((request_dir / "request.json").read_text())
    response_dir.mkdir(parents=True, exist_ok=True)
    for item in manifest["items"]:
        t = read_tensor(request_dir / f"{item['id']}.pctf")
        write_tensor(respond(t, item["kind"], dim, map_rows), response_dir / f"{item['id']}.pctf")
    (response_dir / "done.marker").touch()
    return len(manifest["items"])


def serve(root: Path, dim: int, map_rows: int, poll_s: float, idle_timeout_s: float):
    done: set[Path] = set()
    last_work = time.monotonic()
    while time.monotonic() - last_work < idle_timeout_s:
        pending = [
            d for d in sorted(root.glob("round_*"))
            if d not in done
            and (d / "request" / "request.json").exists()
            and not (d / "response" / "done.marker").exists()
        ]
        for round_dir in pending:
            n = serve_round(round_dir, dim, map_rows)
            done.add(round_dir)
            last_work = time.monotonic()
            print(f"answered {round_dir.name}: {n} items", flush=True)
        if not pending:
            time.sleep(poll_s)


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", help="exchange directory to watch")
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--map-rows", type=int, default=16)
    parser.add_argument("--poll", type=float, default=0.1, help="poll interval seconds")
    parser.add_argument("--idle-timeout", type=float, default=300.0,
                        help="exit after this many idle seconds")
    return parser.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    root = Path(args.root)
    root.mkdir(parents=True, exist_ok=True)
    try:
        serve(root, args.dim, args.map_rows, args.poll, args.idle_timeout)
    except KeyboardInterrupt:
        pass
