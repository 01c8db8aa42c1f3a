"""Shim configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ShimConfig:
    """Everything the serve loop needs.

    ``model`` is a torchvision classifier name; the shim keeps only its
    feature extractor.  ``weights`` picks the loading policy:

    - ``pretrained``: published weights or fail (nonzero exit from the CLI)
    - ``random``: fixed random initialisation seeded by ``init_seed``
    - ``auto``: try pretrained, fall back to the seeded random init

    Whichever is used ends up in meta.json, so responses stay
    self-describing even when the features are untrained.
    """

    watch_dir: str
    model: str = "mobilenet_v3_small"
    weights: str = "auto"
    device: str = "cpu"
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD
    input_size: int = 224
    poll_s: float = 0.5
    init_seed: int = 0
    batch: int = 8

    def __post_init__(self):
        if self.weights not in ("pretrained", "random", "auto"):
            raise ValueError(f"unknown weights policy {self.weights!r}")
        if self.poll_s <= 0:
            raise ValueError("poll_s must be positive")
        if self.input_size <= 0:
            raise ValueError("input_size must be positive")
        if self.batch <= 0:
            raise ValueError("batch must be positive")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean/std must have three channels")

    def normalization(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}


def load_config(path: str | Path) -> ShimConfig:
    doc = json.loads(Path(path).read_text())
    if "mean" in doc:
        doc["mean"] = tuple(doc["mean"])
    if "std" in doc:
        doc["std"] = tuple(doc["std"])
    return ShimConfig(**doc)
