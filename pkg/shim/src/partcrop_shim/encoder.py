"""Torch feature extractor behind the exchange protocol.

Images arrive as [H, W, 3] float32 in [0, 1] (the exchange pixel
convention).  Every input is resized to a square ``input_size``,
normalised, and pushed through the model's convolutional trunk; the
[C, h, w] output becomes an [N, D] grid with N = h*w spatial positions
and D = C channels.  Classifier heads and pooled/class tokens never
enter the responses.
"""

from __future__ import annotations

import numpy as np
import torch
import torchvision.models

from .config import ShimConfig


class CheckpointError(RuntimeError):
    """Pretrained weights were required but could not be loaded."""


def _build_model(cfg: ShimConfig) -> tuple[torch.nn.Module, str]:
    """Instantiate the torchvision model; returns (model, weights_used)."""
    if cfg.weights in ("pretrained", "auto"):
        try:
            model = torchvision.models.get_model(cfg.model, weights="DEFAULT")
            return model, "pretrained"
        except Exception as exc:
            if cfg.weights == "pretrained":
                raise CheckpointError(
                    f"cannot load pretrained weights for {cfg.model}: {exc}"
                ) from exc
    with torch.random.fork_rng():
        torch.manual_seed(cfg.init_seed)
        model = torchvision.models.get_model(cfg.model, weights=None)
    return model, f"random(seed={cfg.init_seed})"


class TorchEncoder:
    def __init__(self, cfg: ShimConfig):
        self.cfg = cfg
        model, self.weights_used = _build_model(cfg)
        if not hasattr(model, "features"):
            raise CheckpointError(
                f"{cfg.model} exposes no .features trunk; pick a conv model"
                " (mobilenet/efficientnet/densenet/vgg style)"
            )
        self.trunk = model.features.to(cfg.device).eval()
        for p in self.trunk.parameters():
            p.requires_grad_(False)
        self._mean = torch.tensor(cfg.mean).view(1, 3, 1, 1).to(cfg.device)
        self._std = torch.tensor(cfg.std).view(1, 3, 1, 1).to(cfg.device)
        self.grid_n, self.dim = self._probe()

    def _probe(self) -> tuple[int, int]:
        grids = self.forward_grids([np.zeros((8, 8, 3), dtype=np.float32)])
        return grids[0].shape[0], grids[0].shape[1]

    def _prepare(self, pixels: np.ndarray) -> torch.Tensor:
        arr = np.asarray(pixels, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected [H, W, 3] pixels, got shape {arr.shape}")
        t = torch.from_numpy(np.ascontiguousarray(arr)).permute(2, 0, 1)
        t = t.unsqueeze(0).to(self.cfg.device)
        size = (self.cfg.input_size, self.cfg.input_size)
        t = torch.nn.functional.interpolate(
            t, size=size, mode="bilinear", align_corners=False
        )
        return (t - self._mean) / self._std

    def forward_grids(self, pixel_arrays: list[np.ndarray]) -> list[np.ndarray]:
        """Encode a batch of [H, W, 3] arrays into [N, D] float32 grids."""
        grids: list[np.ndarray] = []
        with torch.no_grad():
            for start in range(0, len(pixel_arrays), self.cfg.batch):
                chunk = pixel_arrays[start : start + self.cfg.batch]
                batch = torch.cat([self._prepare(p) for p in chunk], dim=0)
                fmap = self.trunk(batch)
                if fmap.ndim != 4:
                    raise ValueError(f"trunk returned ndim {fmap.ndim}, expected 4")
                b, c, h, w = fmap.shape
                flat = fmap.permute(0, 2, 3, 1).reshape(b, h * w, c)
                grids.extend(flat.cpu().numpy().astype(np.float32))
        return grids
