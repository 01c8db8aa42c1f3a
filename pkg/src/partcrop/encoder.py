"""Encoder access: a deterministic synthetic encoder and the file exchange.

Two adapters produce feature maps and pooled crop vectors:

* ``SyntheticEncoder`` is a closed-form oracle for pipeline
  verification.  It keys every draw off (seed, image_id), ignores pixel
  content entirely, and mixes a per-crop "true" feature row with noise
  at a controllable signal level, so member and non-member response
  distributions separate by a known, tunable amount.

* ``ExchangeEncoder`` talks to an external encoder process through a
  file-directory protocol: tensors go out as PCTF files plus a
  request.json, the responder writes PCTF files back and touches
  done.marker.  Membership labels never cross this boundary.

Exchange round layout (one directory per round):

    round_00000/request/request.json   {"items":[{"id":…,"kind":"image"|"crop"}], "request_id":…}
    round_00000/request/<id>.pctf      inputs, f32, images HxWx3 in [0,1], crops hxwx3 in [0,1]
    round_00000/response/<id>.pctf     outputs: [N,D] per image, [D] per crop
    round_00000/response/done.marker   written last by the responder
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ExchangeTimeoutError,
    GatewayError,
    NumericError,
    ValidationError,
)
from .rng import derive_seed, generator
from .tensorio import read_tensor, write_tensor

KIND_IMAGE = "image"
KIND_CROP = "crop"
REQUEST_FILE = "request.json"
DONE_MARKER = "done.marker"


@dataclass(frozen=True)
class EncoderOutput:
    """A flattened feature map [N, D] plus its average-pooled vector."""

    feature_map: np.ndarray
    pooled: np.ndarray | None = None

    def __post_init__(self):
        fm = self.feature_map
        if fm.ndim != 2 or fm.shape[0] < 1 or fm.shape[1] < 1:
            raise ValidationError(f"feature map must be [N,D] with N,D >= 1, got {fm.shape}")
        if not np.isfinite(fm).all():
            raise ValidationError("feature map contains non-finite values")
        if self.pooled is not None and self.pooled.shape != (fm.shape[1],):
            raise ValidationError(
                f"pooled shape {self.pooled.shape} does not match D={fm.shape[1]}"
            )


def avg_pool(feature_map: np.ndarray) -> np.ndarray:
    return feature_map.mean(axis=0)


@dataclass(frozen=True)
class SyntheticEncoderConfig:
    """Knobs of the synthetic oracle.

    alpha_member / alpha_nonmember set how strongly a crop vector points
    at its designated feature row relative to the noise floor; the gap
    between them is the planted membership signal.  crop_scale_response
    rescales both, modelling an encoder whose part response has been
    flattened (1.0 = untouched, lower = flatter).
    """

    dim: int = 64
    map_rows: int = 16
    alpha_member: float = 0.8
    alpha_nonmember: float = 0.5
    noise_sigma: float = 0.1
    crop_scale_response: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.map_rows < 1:
            raise ValidationError("dim and map_rows must be at least 1")
        for name in ("alpha_member", "alpha_nonmember"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {a}")
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ValidationError("noise_sigma must be finite and non-negative")
        if not (np.isfinite(self.crop_scale_response) and self.crop_scale_response >= 0):
            raise ValidationError("crop_scale_response must be finite and non-negative")


def _unit_rows(cfg: SyntheticEncoderConfig, image_id: str) -> np.ndarray:
    rows = generator(derive_seed(cfg.seed, "map", image_id)).standard_normal(
        (cfg.map_rows, cfg.dim)
    )
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if (norms == 0).any():
        raise NumericError("degenerate zero feature row")
    return rows / norms


def synth_encode(
    cfg: SyntheticEncoderConfig, image_id: str, is_member: bool, crops: list
) -> tuple[EncoderOutput, list[np.ndarray]]:
    """Encode an identity, not pixels: same (seed, image_id) ⇒ same output.

    Crop j points at feature row k_j with strength alpha and carries
    sigma-scaled gaussian noise; membership only changes alpha.  Only
    len(crops) matters; the crop arrays themselves are ignored, which is
    what makes this a pure verification oracle.
    """
    rows = _unit_rows(cfg, image_id)
    alpha = cfg.crop_scale_response * (
        cfg.alpha_member if is_member else cfg.alpha_nonmember
    )
    vectors = []
    for j in range(len(crops)):
        g = generator(derive_seed(cfg.seed, "mix", image_id, j))
        k = int(g.integers(0, cfg.map_rows))
        eps = g.standard_normal(cfg.dim)
        v = alpha * rows[k] + cfg.noise_sigma * eps
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise NumericError(
                "crop vector has zero norm; alpha and noise_sigma are both zero"
            )
        vectors.append((v / nrm).astype(np.float32))
    feature_map = rows.astype(np.float32)
    return EncoderOutput(feature_map, avg_pool(feature_map)), vectors


class SyntheticEncoder:
    """Adapter facade over synth_encode."""

    def __init__(self, cfg: SyntheticEncoderConfig = SyntheticEncoderConfig()):
        self.cfg = cfg

    def encode_image(self, img, image_id: str, is_member: bool = False) -> EncoderOutput:
        out, _ = synth_encode(self.cfg, image_id, is_member, [])
        return out

    def encode_crops(self, crops: list, image_id: str, is_member: bool = False) -> list[np.ndarray]:
        if not crops:
            raise ValidationError("crops must be non-empty")
        _, vectors = synth_encode(self.cfg, image_id, is_member, crops)
        return vectors


@dataclass(frozen=True)
class ExchangeItem:
    id: str
    kind: str
    tensor: np.ndarray

    def __post_init__(self):
        if self.kind not in (KIND_IMAGE, KIND_CROP):
            raise ValidationError(f"unknown item kind {self.kind!r}")
        if not self.id or "/" in self.id:
            raise ValidationError(f"item id {self.id!r} must be a non-empty flat name")


def _wrap_response(item_id: str, t: np.ndarray) -> EncoderOutput:
    if t.ndim == 2:
        return EncoderOutput(t, avg_pool(t))
    if t.ndim == 1:
        return EncoderOutput(t[None, :], t)
    raise GatewayError(f"response for {item_id!r} has ndim {t.ndim}, expected 1 or 2")


def run_exchange(
    request_dir,
    response_dir,
    items: list[ExchangeItem],
    timeout_s: float = 600.0,
    poll_s: float = 0.05,
) -> dict[str, EncoderOutput]:
    """One protocol round: write inputs, block on done.marker, read outputs.

    Tensors are written before request.json so a responder triggered by
    the manifest always sees complete inputs.  An empty item list writes
    the manifest and returns immediately.
    """
    request_dir = Path(request_dir)
    response_dir = Path(response_dir)
    request_dir.mkdir(parents=True, exist_ok=True)
    response_dir.mkdir(parents=True, exist_ok=True)
    ids = [item.id for item in items]
    if len(set(ids)) != len(ids):
        raise ValidationError("exchange item ids are not unique")

    for item in items:
        write_tensor(item.tensor, request_dir / f"{item.id}.pctf")
    manifest = {
        "items": [{"id": item.id, "kind": item.kind} for item in items],
        "request_id": uuid.uuid4().hex,
    }
    (request_dir / REQUEST_FILE).write_text(json.dumps(manifest, indent=2))
    if not items:
        return {}

    marker = response_dir / DONE_MARKER
    deadline = time.monotonic() + timeout_s
    while not marker.exists():
        if time.monotonic() > deadline:
            raise ExchangeTimeoutError(
                f"{response_dir}: no {DONE_MARKER} after {timeout_s:g}s"
            )
        time.sleep(poll_s)

    outputs = {}
    for item in items:
        path = response_dir / f"{item.id}.pctf"
        if not path.exists():
            raise GatewayError(f"response missing for item {item.id!r}: expected {path}")
        outputs[item.id] = _wrap_response(item.id, read_tensor(path))
    return outputs


class ExchangeEncoder:
    """Adapter that forwards every call through the exchange directory.

    Sends images as f32 HxWx3 scaled to [0,1]; the responder owns any
    model-specific normalization.  Membership flags are accepted for
    interface parity and never written out.
    """

    def __init__(self, root, timeout_s: float = 600.0):
        self.root = Path(root)
        self.timeout_s = timeout_s
        self._round = 0

    def _dirs(self) -> tuple[Path, Path]:
        round_dir = self.root / f"round_{self._round:05d}"
        self._round += 1
        return round_dir / "request", round_dir / "response"

    @staticmethod
    def _as_unit_pixels(img) -> np.ndarray:
        arr = np.asarray(img)
        if arr.dtype == np.uint8:
            return arr.astype(np.float32) / np.float32(255.0)
        return arr.astype(np.float32)

    def encode_image(self, img, image_id: str, is_member: bool = False) -> EncoderOutput:
        req, resp = self._dirs()
        item = ExchangeItem(image_id, KIND_IMAGE, self._as_unit_pixels(img))
        return run_exchange(req, resp, [item], self.timeout_s)[image_id]

    def encode_crops(self, crops: list, image_id: str, is_member: bool = False) -> list[np.ndarray]:
        if not crops:
            raise ValidationError("crops must be non-empty")
        req, resp = self._dirs()
        items = [
            ExchangeItem(f"{image_id}.crop{j:04d}", KIND_CROP, self._as_unit_pixels(c))
            for j, c in enumerate(crops)
        ]
        outputs = run_exchange(req, resp, items, self.timeout_s)
        return [outputs[item.id].pooled for item in items]


def encode_image(adapter, img, image_id: str, is_member: bool = False) -> EncoderOutput:
    return adapter.encode_image(img, image_id, is_member)


def encode_crops(adapter, crops: list, image_id: str, is_member: bool = False) -> list[np.ndarray]:
    return adapter.encode_crops(crops, image_id, is_member)
