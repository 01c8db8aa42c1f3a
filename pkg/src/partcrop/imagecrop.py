"""Image decoding, bilinear resizing and the part-crop sampler.

An image is an H x W x 3 uint8 RGB array.  Stage 1 of the attack turns
one image into m small random crops: each crop covers a random area
fraction (default 0.08-0.2 of the image) at a random aspect ratio, and
is resized to a fixed query resolution (default 16 x 16) with values
scaled to [0, 1].

Every random draw comes from a per-crop keyed generator, so crop j of
an image is the same array no matter how many crops are requested or in
what order images are processed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import FormatError, SamplingError, ValidationError
from .rng import derive_seed, generator

MIN_CROP_SIDE = 8


def as_image(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"image must be HxWx3, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValidationError(f"image must be uint8, got {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError("image has an empty dimension")
    return arr


def load_image(path) -> np.ndarray:
    """Decode a PNG or JPEG file into an H x W x 3 uint8 array."""
    try:
        with PILImage.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise FormatError(f"{path}: cannot decode image: {exc}") from exc


def bilinear_resize_f32(src: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resample to h x w with half-pixel centers, f32 accumulation.

    Returns float32 values before any quantization; source coordinates
    outside the grid are clamped (edge replication).
    """
    if h < 1 or w < 1:
        raise ValidationError(f"target size must be positive, got {(h, w)}")
    src = np.asarray(src, dtype=np.float32)
    src_h, src_w = src.shape[0], src.shape[1]

    sy = (np.arange(h, dtype=np.float32) + 0.5) * np.float32(src_h / h) - 0.5
    sx = (np.arange(w, dtype=np.float32) + 0.5) * np.float32(src_w / w) - 0.5
    fy0 = np.floor(sy)
    fx0 = np.floor(sx)
    fy = (sy - fy0).astype(np.float32)[:, None, None]
    fx = (sx - fx0).astype(np.float32)[None, :, None]

    y0 = np.clip(fy0, 0, src_h - 1).astype(np.int64)
    y1 = np.clip(fy0 + 1, 0, src_h - 1).astype(np.int64)
    x0 = np.clip(fx0, 0, src_w - 1).astype(np.int64)
    x1 = np.clip(fx0 + 1, 0, src_w - 1).astype(np.int64)

    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_bilinear(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Resize an image; quantization rounds half to even."""
    arr = as_image(img)
    vals = bilinear_resize_f32(arr, h, w)
    return np.clip(np.rint(vals), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class CropSpec:
    """Part-crop sampling parameters."""

    m: int = 128
    scale: tuple[float, float] = (0.08, 0.2)
    out_size: tuple[int, int] = (16, 16)
    aspect: tuple[float, float] = (3 / 4, 4 / 3)
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError("crop count m must be at least 1")
        s_min, s_max = self.scale
        if not 0 < s_min <= s_max <= 1:
            raise ValidationError(f"scale range {self.scale} must satisfy 0 < min <= max <= 1")
        if self.out_size[0] < 2 or self.out_size[1] < 2:
            raise ValidationError("out_size must be at least 2x2")
        a_min, a_max = self.aspect
        if not 0 < a_min <= a_max:
            raise ValidationError(f"aspect range {self.aspect} must be positive and ordered")


def crop_geometry(
    height: int, width: int, scale: tuple[float, float], aspect: tuple[float, float], rng
) -> tuple[int, int, int, int]:
    """Draw one crop rectangle (top, left, crop_h, crop_w).

    Target area is u*H*W with u uniform over the scale range, aspect
    ratio is log-uniform; both sides round half to even, then clamp to
    the image so the rectangle always fits.
    """
    u = rng.uniform(scale[0], scale[1])
    area = u * height * width
    r = math.exp(rng.uniform(math.log(aspect[0]), math.log(aspect[1])))
    crop_w = int(np.rint(math.sqrt(area * r)))
    crop_h = int(np.rint(math.sqrt(area / r)))
    crop_w = min(max(crop_w, 1), width)
    crop_h = min(max(crop_h, 1), height)
    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))
    return top, left, crop_h, crop_w


def sample_crops(img: np.ndarray, spec: CropSpec) -> list[np.ndarray]:
    """Sample spec.m random part crops, each out_size x 3 float32 in [0, 1].

    Crop j draws from generator(derive_seed(spec.seed, "crop", j)), so
    the first k crops are identical for any m >= k under the same seed.
    """
    arr = as_image(img)
    height, width = arr.shape[0], arr.shape[1]
    if height < MIN_CROP_SIDE or width < MIN_CROP_SIDE:
        raise SamplingError(
            f"image {height}x{width} too small to crop, need at least "
            f"{MIN_CROP_SIDE}x{MIN_CROP_SIDE}"
        )
    out_h, out_w = spec.out_size
    crops = []
    for j in range(spec.m):
        rng = generator(derive_seed(spec.seed, "crop", j))
        top, left, crop_h, crop_w = crop_geometry(height, width, spec.scale, spec.aspect, rng)
        patch = arr[top : top + crop_h, left : left + crop_w]
        resized = resize_bilinear(patch, out_h, out_w)
        crops.append(resized.astype(np.float32) / np.float32(255.0))
    return crops


@dataclass(frozen=True)
class AugmentSpec:
    """Random view parameters for the augmentation-based baselines.

    Views keep the source aspect ratio: a scale draw u crops a
    sqrt(u)-scaled window, resized back to the input size, then an
    optional horizontal flip and a small rotation with black fill.
    """

    scale: tuple[float, float] = (0.2, 1.0)
    flip_prob: float = 0.5
    max_rotation_deg: float = 15.0

    def __post_init__(self):
        s_min, s_max = self.scale
        if not 0 < s_min <= s_max <= 1:
            raise ValidationError(f"scale range {self.scale} must satisfy 0 < min <= max <= 1")
        if not 0 <= self.flip_prob <= 1:
            raise ValidationError("flip_prob must lie in [0, 1]")
        if self.max_rotation_deg < 0:
            raise ValidationError("max_rotation_deg must be non-negative")


def augment_views(
    img: np.ndarray, n: int, seed: int, spec: AugmentSpec = AugmentSpec()
) -> list[np.ndarray]:
    """Produce n augmented views of an image, each at the input size."""
    if n < 2:
        raise ValidationError(f"need at least 2 views, got {n}")
    arr = as_image(img)
    height, width = arr.shape[0], arr.shape[1]
    views = []
    for i in range(n):
        rng = generator(derive_seed(seed, "view", i))
        u = rng.uniform(spec.scale[0], spec.scale[1])
        crop_h = min(max(int(np.rint(height * math.sqrt(u))), 1), height)
        crop_w = min(max(int(np.rint(width * math.sqrt(u))), 1), width)
        top = int(rng.integers(0, height - crop_h + 1))
        left = int(rng.integers(0, width - crop_w + 1))
        flip_u = rng.uniform(0.0, 1.0)
        angle = rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg)

        view = resize_bilinear(arr[top : top + crop_h, left : left + crop_w], height, width)
        if flip_u < spec.flip_prob:
            view = view[:, ::-1]
        if angle != 0.0:
            rotated = PILImage.fromarray(view).rotate(
                angle, resample=PILImage.Resampling.BILINEAR, fillcolor=(0, 0, 0)
            )
            view = np.asarray(rotated, dtype=np.uint8)
        views.append(np.ascontiguousarray(view))
    return views
