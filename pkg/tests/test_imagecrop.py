import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from partcrop.errors import FormatError, SamplingError, ValidationError
from partcrop.imagecrop import (
    AugmentSpec,
    CropSpec,
    augment_views,
    bilinear_resize_f32,
    crop_geometry,
    load_image,
    resize_bilinear,
    sample_crops,
)
from partcrop.rng import derive_seed, generator


def _noise_image(h, w, seed=0):
    return generator(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def test_fixed_quarter_area_square_aspect_gives_32x32():
    # sqrt(0.25 * 64 * 64) = 32 exactly, no rounding involved
    img_h = img_w = 64
    for j in range(20):
        rng = generator(derive_seed(7, "crop", j))
        _, _, crop_h, crop_w = crop_geometry(img_h, img_w, (0.25, 0.25), (1.0, 1.0), rng)
        assert (crop_h, crop_w) == (32, 32)


def test_default_spec_returns_128_crops():
    crops = sample_crops(_noise_image(64, 64), CropSpec(seed=3))
    assert len(crops) == 128
    for c in crops:
        assert c.shape == (16, 16, 3)
        assert c.dtype == np.float32
        assert c.min() >= 0.0 and c.max() <= 1.0


def test_constant_white_image_gives_all_ones():
    img = np.full((48, 48, 3), 255, dtype=np.uint8)
    for c in sample_crops(img, CropSpec(m=8, seed=11)):
        assert np.array_equal(c, np.ones((16, 16, 3), dtype=np.float32))


def test_crops_deterministic_and_prefix_stable():
    img = _noise_image(80, 60, seed=5)
    a = sample_crops(img, CropSpec(m=128, seed=42))
    b = sample_crops(img, CropSpec(m=128, seed=42))
    small = sample_crops(img, CropSpec(m=32, seed=42))
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()
    # crop j depends only on (seed, j): a shorter batch is a prefix
    for x, y in zip(small, a):
        assert x.tobytes() == y.tobytes()
    other = sample_crops(img, CropSpec(m=4, seed=43))
    assert other[0].tobytes() != a[0].tobytes()


def test_extreme_scale_ranges_accepted():
    img = _noise_image(64, 64)
    for scale in [(0.01, 0.03), (0.5, 1.0)]:
        crops = sample_crops(img, CropSpec(m=4, scale=scale, seed=1))
        assert len(crops) == 4


def test_tiny_image_rejected():
    with pytest.raises(SamplingError):
        sample_crops(_noise_image(7, 64), CropSpec(m=2, seed=0))


def test_crop_spec_validation():
    with pytest.raises(ValidationError):
        CropSpec(m=0)
    with pytest.raises(ValidationError):
        CropSpec(scale=(0.0, 0.2))
    with pytest.raises(ValidationError):
        CropSpec(scale=(0.3, 0.2))
    with pytest.raises(ValidationError):
        CropSpec(out_size=(1, 16))


@settings(max_examples=60, deadline=None)
@given(
    side=st.integers(min_value=24, max_value=96),
    s_min=st.floats(min_value=0.05, max_value=0.5),
    width_frac=st.floats(min_value=0.0, max_value=0.4),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_geometry_inside_image_and_area_in_range(side, s_min, width_frac, seed):
    s_max = min(s_min + width_frac, 0.5)
    rng = generator(seed)
    top, left, crop_h, crop_w = crop_geometry(side, side, (s_min, s_max), (3 / 4, 4 / 3), rng)
    assert 0 <= top and top + crop_h <= side
    assert 0 <= left and left + crop_w <= side
    # area within the scale band allowing half a pixel of rounding per side
    area = side * side
    assert (crop_h + 0.5) * (crop_w + 0.5) >= s_min * area
    assert (crop_h - 0.5) * (crop_w - 0.5) <= s_max * area


@settings(max_examples=40, deadline=None)
@given(
    h=st.integers(min_value=8, max_value=40),
    w=st.integers(min_value=8, max_value=40),
    seed=st.integers(min_value=0, max_value=2**16),
)
def test_crops_always_valid(h, w, seed):
    crops = sample_crops(_noise_image(h, w, seed), CropSpec(m=3, seed=seed))
    for c in crops:
        assert c.shape == (16, 16, 3)
        assert np.isfinite(c).all()
        assert c.min() >= 0.0 and c.max() <= 1.0


def test_resize_same_size_is_identity():
    img = _noise_image(16, 16, seed=2)
    assert np.array_equal(resize_bilinear(img, 16, 16), img)


def test_resize_halving_rows_averages_neighbours():
    # rows [0, 255] collapse to one row sampled midway: 127.5 each
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    img[1] = 255
    vals = bilinear_resize_f32(img, 1, 2)
    assert vals.shape == (1, 2, 3)
    assert np.allclose(vals, 127.5)
    # 127.5 rounds half to even
    assert np.array_equal(resize_bilinear(img, 1, 2), np.full((1, 2, 3), 128, np.uint8))


def test_resize_upscale_hand_weights():
    # 1x2 row [0, 255] to 1x4; centres at -0.25, 0.25, 0.75, 1.25
    img = np.zeros((1, 2, 3), dtype=np.uint8)
    img[0, 1] = 255
    vals = bilinear_resize_f32(img, 1, 4)
    assert np.allclose(vals[0, :, 0], [0.0, 63.75, 191.25, 255.0])


def test_resize_constant_stays_constant():
    img = np.full((10, 14, 3), 77, dtype=np.uint8)
    for h, w in [(3, 5), (16, 16), (21, 9)]:
        assert np.array_equal(resize_bilinear(img, h, w), np.full((h, w, 3), 77, np.uint8))


def test_resize_rejects_degenerate_target():
    with pytest.raises(ValidationError):
        resize_bilinear(_noise_image(8, 8), 0, 4)


def test_augment_shapes_and_determinism():
    img = _noise_image(40, 32, seed=9)
    views = augment_views(img, 3, seed=21)
    assert len(views) == 3
    for v in views:
        assert v.shape == img.shape
        assert v.dtype == np.uint8
    again = augment_views(img, 3, seed=21)
    for v, w in zip(views, again):
        assert np.array_equal(v, w)


def test_augment_identity_configuration():
    img = _noise_image(24, 36, seed=4)
    spec = AugmentSpec(scale=(1.0, 1.0), flip_prob=0.0, max_rotation_deg=0.0)
    for v in augment_views(img, 2, seed=0, spec=spec):
        assert np.array_equal(v, img)


def test_augment_needs_two_views():
    with pytest.raises(ValidationError):
        augment_views(_noise_image(16, 16), 1, seed=0)


def test_load_image_png_round_trip(tmp_path):
    img = _noise_image(20, 24, seed=6)
    path = tmp_path / "img.png"
    PILImage.fromarray(img).save(path)
    assert np.array_equal(load_image(path), img)


def test_load_image_jpeg_decodes(tmp_path):
    img = _noise_image(20, 24, seed=6)
    path = tmp_path / "img.jpg"
    PILImage.fromarray(img).save(path, quality=90)
    out = load_image(path)
    assert out.shape == (20, 24, 3)
    assert out.dtype == np.uint8


def test_load_image_rejects_garbage(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"not an image at all")
    with pytest.raises(FormatError) as err:
        load_image(path)
    assert "broken.png" in str(err.value)
