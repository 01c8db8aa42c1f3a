"""Membership features: response energies and baseline constructors.

The part-crop feature for one image with m crops:

1. each pooled crop vector is dotted against the image's feature map,
   giving an N-way response vector (f64),
2. a softmax turns it into a response distribution,
3. the distribution is scored against two benchmarks with
   KL(bench, response) = sum_j bench_j * ln(bench_j / response_j):
   the uniform distribution and a per-query softmaxed gaussian draw,
4. the m uniform energies and m gaussian energies are each sorted
   descending and concatenated into a 2m-dim vector.

Sharper-than-benchmark responses land far from uniform, and member
images respond more sharply than non-members, which is the signal the
attacker net learns.  Baselines: pairwise-cosine over augmented views,
per-channel view variance, and the raw pooled vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, NumericError, ValidationError
from .rng import derive_seed, generator
from .tensorio import read_tensor, write_tensor

KIND_PARTCROP = "partcrop"
KIND_ENCODERMI = "encodermi"
KIND_VARIANCE = "variance"
KIND_SUPERVISED = "supervised"
FEATURE_KINDS = (KIND_PARTCROP, KIND_ENCODERMI, KIND_VARIANCE, KIND_SUPERVISED)


def similarity(feature_map: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Raw dot products of a query against each feature-map row, in f64."""
    chi = np.asarray(feature_map, dtype=np.float64)
    p = np.asarray(query, dtype=np.float64)
    if chi.ndim != 2 or p.ndim != 1 or chi.shape[1] != p.shape[0]:
        raise DimensionError(
            f"feature map {chi.shape} and query {p.shape} do not agree"
        )
    v = chi @ p
    if not np.isfinite(v).all():
        raise NumericError("similarity produced non-finite values")
    return v


def to_distribution(v: np.ndarray) -> np.ndarray:
    """Stable softmax: exp(v - max) normalized, all entries > 0."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise DimensionError(f"expected a non-empty vector, got shape {v.shape}")
    e = np.exp(v - v.max())
    return e / e.sum()


def uniform_benchmark(n: int) -> np.ndarray:
    if n < 1:
        raise ValidationError("benchmark length must be at least 1")
    return np.full(n, 1.0 / n, dtype=np.float64)


def gaussian_benchmark(n: int, seed: int, query_index: int) -> np.ndarray:
    """Softmax of n standard-normal draws, keyed by (seed, query_index)."""
    draws = generator(derive_seed(seed, "gauss", query_index)).standard_normal(n)
    return to_distribution(draws)


def kl_energy(v: np.ndarray, bench: np.ndarray) -> float:
    """KL(bench, v) = sum_j bench_j * ln(bench_j / v_j), benchmark on top."""
    v = np.asarray(v, dtype=np.float64)
    bench = np.asarray(bench, dtype=np.float64)
    if v.shape != bench.shape or v.ndim != 1:
        raise DimensionError(f"distribution shapes differ: {v.shape} vs {bench.shape}")
    if (v <= 0).any():
        raise NumericError("response distribution has a zero entry")
    if (bench < 0).any() or abs(bench.sum() - 1.0) > 1e-6:
        raise ValidationError("benchmark is not a probability distribution")
    positive = bench > 0
    terms = np.zeros_like(bench)
    terms[positive] = bench[positive] * np.log(bench[positive] / v[positive])
    return float(terms.sum())


@dataclass(frozen=True)
class MembershipFeature:
    kind: str
    vector: np.ndarray
    label: bool | None = None

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        if self.vector.ndim != 1 or self.vector.dtype != np.float32:
            raise ValidationError("feature vector must be a 1-d float32 array")
        if not np.isfinite(self.vector).all():
            raise ValidationError("feature vector contains non-finite values")


def partcrop_feature(
    feature_map: np.ndarray, parts: list[np.ndarray], seed: int
) -> MembershipFeature:
    """Sorted uniform energies then sorted gaussian energies, length 2m.

    Gaussian benchmarks are regenerated per query, keyed by the query
    index; reordering the input parts therefore changes the gaussian
    half, so callers must keep part order stable (it is, per-crop keyed).
    """
    if not parts:
        raise ValidationError("need at least one part crop")
    n = np.asarray(feature_map).shape[0]
    u_bench = uniform_benchmark(n)
    e_u = np.empty(len(parts), dtype=np.float64)
    e_g = np.empty(len(parts), dtype=np.float64)
    for i, part in enumerate(parts):
        dist = to_distribution(similarity(feature_map, part))
        e_u[i] = kl_energy(dist, u_bench)
        e_g[i] = kl_energy(dist, gaussian_benchmark(n, seed, i))
    vector = np.concatenate([np.sort(e_u)[::-1], np.sort(e_g)[::-1]])
    return MembershipFeature(KIND_PARTCROP, vector.astype(np.float32))


def encodermi_feature(views: list[np.ndarray]) -> MembershipFeature:
    """Descending cosine similarities of all unordered view pairs."""
    if len(views) < 2:
        raise ValidationError("need at least 2 views")
    mat = np.asarray(views, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    if (norms == 0).any():
        raise NumericError("a view vector has zero norm, cosine undefined")
    unit = mat / norms[:, None]
    gram = unit @ unit.T
    iu = np.triu_indices(len(views), k=1)
    sims = np.sort(gram[iu])[::-1]
    return MembershipFeature(KIND_ENCODERMI, sims.astype(np.float32))


def variance_feature(views: list[np.ndarray]) -> MembershipFeature:
    """Per-channel population variance across the view vectors.

    Shifting by the first view is a no-op for the variance but keeps the
    computation exact when views coincide (and better conditioned when
    they cluster far from the origin).
    """
    if len(views) < 2:
        raise ValidationError("need at least 2 views")
    mat = np.asarray(views, dtype=np.float64)
    mat = mat - mat[0]
    var = mat.var(axis=0, ddof=0)
    return MembershipFeature(KIND_VARIANCE, var.astype(np.float32))


def supervised_feature(pooled: np.ndarray) -> MembershipFeature:
    """The pooled encoder vector itself, copied through."""
    vec = np.asarray(pooled, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] < 1:
        raise ValidationError(f"pooled vector must be 1-d, got shape {vec.shape}")
    if not np.isfinite(vec).all():
        raise ValidationError("pooled vector contains non-finite values")
    return MembershipFeature(KIND_SUPERVISED, vec.astype(np.float32))


@dataclass
class FeatureSet:
    """A labelled feature matrix with ids, persisted as PCTF + JSON sidecar."""

    kind: str
    vectors: np.ndarray
    labels: np.ndarray
    ids: list[str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        if self.vectors.ndim != 2:
            raise ValidationError("feature matrix must be [num, dim]")
        num = self.vectors.shape[0]
        if len(self.labels) != num or len(self.ids) != num:
            raise ValidationError("vectors, labels and ids must have equal length")
        self.labels = np.asarray(self.labels, dtype=bool)

    @classmethod
    def from_features(
        cls, feats: list[MembershipFeature], ids: list[str], meta: dict | None = None
    ) -> "FeatureSet":
        if not feats:
            raise ValidationError("feature list is empty")
        kinds = {f.kind for f in feats}
        if len(kinds) != 1:
            raise ValidationError(f"mixed feature kinds {sorted(kinds)}")
        if any(f.label is None for f in feats):
            raise ValidationError("all features need labels to form a set")
        vectors = np.stack([f.vector for f in feats])
        labels = np.array([f.label for f in feats], dtype=bool)
        return cls(kinds.pop(), vectors, labels, list(ids), dict(meta or {}))

    def save(self, base: str | Path) -> None:
        base = Path(base)
        write_tensor(self.vectors, base.with_suffix(".pctf"))
        sidecar = {
            "kind": self.kind,
            "ids": self.ids,
            "labels": [bool(b) for b in self.labels],
            "meta": self.meta,
        }
        base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, base: str | Path) -> "FeatureSet":
        base = Path(base)
        vectors = read_tensor(base.with_suffix(".pctf"))
        sidecar = json.loads(base.with_suffix(".json").read_text())
        return cls(
            kind=sidecar["kind"],
            vectors=vectors,
            labels=np.asarray(sidecar["labels"], dtype=bool),
            ids=list(sidecar["ids"]),
            meta=dict(sidecar.get("meta", {})),
        )
