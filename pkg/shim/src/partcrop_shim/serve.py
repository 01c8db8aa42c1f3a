"""Polling consumer for exchange rounds.

A round is ready when ``round_*/request/request.json`` exists (the
requester writes tensors first) and ``response/done.marker`` does not.
Responses: images keep the full [N, D] grid, crops are pooled to [D] by
a spatial mean.  A failing item produces ``<id>.err`` instead of a
tensor and never blocks its round; ``done.marker`` is always written
last, after ``meta.json``.
"""

from __future__ import annotations

import json
import time
import traceback
from pathlib import Path

import numpy as np

from .config import ShimConfig
from .encoder import TorchEncoder
from .pctf import read_tensor, write_tensor

KIND_IMAGE = "image"
KIND_CROP = "crop"


def _decode_items(request_dir: Path, items: list[dict]):
    good, errors = [], {}
    for item in items:
        item_id, kind = item["id"], item["kind"]
        if kind not in (KIND_IMAGE, KIND_CROP):
            errors[item_id] = f"unknown kind {kind!r}"
            continue
        try:
            pixels = read_tensor(request_dir / f"{item_id}.pctf")
            if pixels.ndim != 3 or pixels.shape[2] != 3:
                raise ValueError(f"expected [H, W, 3] pixels, got {pixels.shape}")
            good.append((item_id, kind, pixels))
        except Exception as exc:
            errors[item_id] = f"{type(exc).__name__}: {exc}"
    return good, errors


def _forward_isolated(encoder, good, errors):
    """Batch forward; on failure retry items one by one so a single bad
    input cannot take down the round."""
    try:
        return encoder.forward_grids([pixels for _, _, pixels in good])
    except Exception:
        grids = []
        kept = []
        for item_id, kind, pixels in good:
            try:
                grids.append(encoder.forward_grids([pixels])[0])
                kept.append((item_id, kind, pixels))
            except Exception as exc:
                errors[item_id] = f"{type(exc).__name__}: {exc}"
        good[:] = kept
        return grids


def process_round(round_dir: Path, encoder, cfg: ShimConfig) -> None:
    request_dir = round_dir / "request"
    response_dir = round_dir / "response"
    response_dir.mkdir(parents=True, exist_ok=True)
    doc = json.loads((request_dir / "request.json").read_text())
    good, errors = _decode_items(request_dir, doc.get("items", []))
    grids = _forward_isolated(encoder, good, errors)
    for (item_id, kind, _), grid in zip(good, grids):
        out = grid if kind == KIND_IMAGE else grid.mean(axis=0)
        write_tensor(np.asarray(out, dtype=np.float32), response_dir / f"{item_id}.pctf")
    for item_id, message in errors.items():
        (response_dir / f"{item_id}.err").write_text(message + "\n")
    meta = {
        "model": cfg.model,
        "weights": encoder.weights_used,
        "layer": "features",
        "N": encoder.grid_n,
        "D": encoder.dim,
        "input_size": cfg.input_size,
        "normalization": cfg.normalization(),
    }
    (response_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    (response_dir / "done.marker").write_text("done\n")


def pending_rounds(root: Path) -> list[Path]:
    ready = []
    for round_dir in sorted(root.glob("round_*")):
        if not (round_dir / "request" / "request.json").is_file():
            continue
        if (round_dir / "response" / "done.marker").exists():
            continue
        ready.append(round_dir)
    return ready


def serve(
    cfg: ShimConfig,
    encoder=None,
    max_rounds: int | None = None,
    idle_timeout: float | None = None,
) -> int:
    """Run until interrupted (or until the optional test bounds hit).

    Returns the number of rounds served.
    """
    root = Path(cfg.watch_dir)
    root.mkdir(parents=True, exist_ok=True)
    if encoder is None:
        encoder = TorchEncoder(cfg)
    served = 0
    last_activity = time.monotonic()
    while True:
        progressed = False
        for round_dir in pending_rounds(root):
            try:
                process_round(round_dir, encoder, cfg)
            except Exception:
                fail = round_dir / "response"
                fail.mkdir(parents=True, exist_ok=True)
                (fail / "round.err").write_text(traceback.format_exc())
                (fail / "done.marker").write_text("failed\n")
            served += 1
            progressed = True
            if max_rounds is not None and served >= max_rounds:
                return served
        now = time.monotonic()
        if progressed:
            last_activity = now
        elif idle_timeout is not None and now - last_activity > idle_timeout:
            return served
        time.sleep(cfg.poll_s)
