"""Manifest-to-features plumbing shared by the protocols and the CLI.

One entry flows as: pixels (when the adapter needs them) -> m part
crops -> encoder -> feature map + pooled crop vectors -> membership
feature.  Per-image seeds derive from (run_seed, image_id), so work
can be distributed or re-ordered freely without changing any byte of
the output, and a smaller m produces a prefix of a larger m's crops.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .encoder import SyntheticEncoder
from .errors import ValidationError
from .features import (
    KIND_ENCODERMI,
    KIND_PARTCROP,
    KIND_SUPERVISED,
    KIND_VARIANCE,
    FeatureSet,
    MembershipFeature,
    encodermi_feature,
    partcrop_feature,
    supervised_feature,
    variance_feature,
)
from .imagecrop import AugmentSpec, CropSpec, augment_views, load_image, sample_crops
from .rng import derive_seed
from .tensorio import DatasetManifest, ManifestEntry


def synthetic_manifest(
    n_members: int, n_nonmembers: int, prefix: str = "syn"
) -> DatasetManifest:
    """An in-memory manifest for content-free (synthetic encoder) runs."""
    if n_members < 2 or n_nonmembers < 2:
        raise ValidationError("need at least 2 entries per class")
    entries = [
        ManifestEntry(id=f"{prefix}-m{i:05d}", path="", is_member=True)
        for i in range(n_members)
    ] + [
        ManifestEntry(id=f"{prefix}-n{i:05d}", path="", is_member=False)
        for i in range(n_nonmembers)
    ]
    return DatasetManifest(entries)


def _adapter_needs_pixels(adapter) -> bool:
    return not isinstance(adapter, SyntheticEncoder)


def entry_feature(
    adapter,
    entry: ManifestEntry,
    kind: str,
    *,
    crop_spec: CropSpec,
    n_views: int,
    run_seed: int,
    images_root=None,
    augment_spec: AugmentSpec = AugmentSpec(),
) -> MembershipFeature:
    """Compute one image's membership feature of the requested kind."""
    img = None
    if _adapter_needs_pixels(adapter):
        if images_root is None:
            raise ValidationError("adapter needs pixels but no images_root given")
        img = load_image(str(Path(images_root) / entry.path))

    if kind == KIND_PARTCROP:
        per_image = replace(crop_spec, seed=derive_seed(run_seed, "crops", entry.id))
        crops = (
            sample_crops(img, per_image) if img is not None else [None] * crop_spec.m
        )
        vecs = adapter.encode_crops(crops, entry.id, entry.is_member)
        fmap = adapter.encode_image(img, entry.id, entry.is_member).feature_map
        feat = partcrop_feature(fmap, vecs, seed=derive_seed(run_seed, "bench"))
    elif kind in (KIND_ENCODERMI, KIND_VARIANCE):
        views = (
            augment_views(img, n_views, derive_seed(run_seed, "views", entry.id), augment_spec)
            if img is not None
            else [None] * n_views
        )
        vecs = adapter.encode_crops(views, entry.id, entry.is_member)
        feat = (
            encodermi_feature(vecs) if kind == KIND_ENCODERMI else variance_feature(vecs)
        )
    elif kind == KIND_SUPERVISED:
        out = adapter.encode_image(img, entry.id, entry.is_member)
        pooled = out.pooled if out.pooled is not None else out.feature_map.mean(axis=0)
        feat = supervised_feature(pooled)
    else:
        raise ValidationError(f"unknown attack kind {kind!r}")
    return MembershipFeature(feat.kind, feat.vector, label=entry.is_member)


def generate_features(
    adapter,
    manifest: DatasetManifest,
    kind: str,
    *,
    crop_spec: CropSpec = CropSpec(),
    n_views: int = 10,
    run_seed: int = 0,
    images_root=None,
    jobs: int = 1,
) -> FeatureSet:
    """Features for every manifest entry, order-stable and seed-stable."""
    if not manifest.entries:
        raise ValidationError("manifest is empty")

    def one(entry):
        return entry_feature(
            adapter,
            entry,
            kind,
            crop_spec=crop_spec,
            n_views=n_views,
            run_seed=run_seed,
            images_root=images_root,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            feats = list(pool.map(one, manifest.entries))
    else:
        feats = [one(e) for e in manifest.entries]
    meta = {
        "kind": kind,
        "run_seed": run_seed,
        "m": crop_spec.m,
        "n_views": n_views,
        "scale": list(crop_spec.scale),
    }
    return FeatureSet.from_features(feats, [e.id for e in manifest.entries], meta)


ABLATION_MODES = ("both", "uniform", "gaussian")


def slice_ablation(fs: FeatureSet, mode: str) -> FeatureSet:
    """Keep both energy halves, or only the uniform / gaussian half."""
    if mode not in ABLATION_MODES:
        raise ValidationError(f"unknown ablation mode {mode!r}")
    if mode == "both" or fs.kind != KIND_PARTCROP:
        return fs
    dim = fs.vectors.shape[1]
    if dim % 2 != 0:
        raise ValidationError(f"cannot halve feature dim {dim}")
    half = dim // 2
    cols = slice(0, half) if mode == "uniform" else slice(half, dim)
    return FeatureSet(
        fs.kind,
        np.ascontiguousarray(fs.vectors[:, cols]),
        fs.labels.copy(),
        list(fs.ids),
        {**fs.meta, "ablation": mode},
    )


def rows_for_ids(fs: FeatureSet, ids: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Select (vectors, labels) for the given ids, in the given order."""
    index = {img_id: i for i, img_id in enumerate(fs.ids)}
    missing = [i for i in ids if i not in index]
    if missing:
        raise ValidationError(f"features missing for ids {missing[:5]}")
    rows = [index[i] for i in ids]
    return fs.vectors[rows].astype(np.float64), fs.labels[rows]
