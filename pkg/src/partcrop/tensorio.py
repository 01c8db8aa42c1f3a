"""Tensor file format and dataset manifests.

Tensors cross every module boundary (and the encoder exchange) as PCTF
files, a deliberately tiny format that any language can parse:

    bytes 0..3   magic ``PCTF``
    byte  4      format version, currently ``0x01``
    byte  5      number of dimensions (u8)
    then         ndim little-endian u32 dimension sizes
    then         row-major payload of little-endian IEEE-754 f32

Values are finite by contract; writers refuse NaN/Inf and readers
refuse truncated or mislabelled files.  In memory a tensor is a plain
``numpy.ndarray`` of dtype float32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    SplitError,
    TensorWriteError,
    ValidationError,
)
from .rng import generator

MAGIC = b"PCTF"
VERSION = 1

ATTACK_TRAIN = "attack_train"
ATTACK_EVAL = "attack_eval"
UNSPLIT = ""


def as_tensor(values, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Validate ``values`` as a finite float32 tensor.

    Accepts any array-like; returns a C-contiguous float32 array.
    """
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if shape is not None and arr.shape != tuple(shape):
        raise ValidationError(f"expected shape {tuple(shape)}, got {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError("tensor contains non-finite values")
    return arr


def write_tensor(t, path: str | Path) -> None:
    """Write a tensor to ``path`` in PCTF format (byte-deterministic)."""
    arr = as_tensor(t)
    if arr.ndim > 255:
        raise ValidationError("PCTF supports at most 255 dimensions")
    for dim in arr.shape:
        if not 0 < dim <= 0xFFFFFFFF:
            raise ValidationError(f"dimension {dim} out of u32 range")
    header = MAGIC + struct.pack("<BB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype("<f4", copy=False).tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise TensorWriteError(f"cannot write tensor to {path}: {exc}") from exc


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a PCTF file back into a float32 array (inverse of write)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read tensor from {path}: {exc}") from exc
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 6:
        raise CorruptionError(f"{path}: header truncated")
    version, ndim = data[4], data[5]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 6 + 4 * ndim
    if len(data) < offset:
        raise CorruptionError(f"{path}: dimension table truncated")
    shape = struct.unpack(f"<{ndim}I", data[6:offset])
    count = 1
    for dim in shape:
        if dim == 0:
            raise CorruptionError(f"{path}: zero-sized dimension")
        count *= dim
    expected = offset + 4 * count
    if len(data) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(data) - offset} bytes, expected {4 * count}"
        )
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    arr = arr.reshape(shape).astype(np.float32, copy=True)
    if not np.isfinite(arr).all():
        raise CorruptionError(f"{path}: payload contains non-finite values")
    return arr


@dataclass(frozen=True)
class ManifestEntry:
    """One image record: identity, storage path, membership, split."""

    id: str
    path: str
    is_member: bool
    split: str = UNSPLIT


@dataclass
class DatasetManifest:
    """A list of image records with unique ids."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("manifest ids are not unique")

    def members(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.is_member]

    def nonmembers(self) -> list[ManifestEntry]:
        return [e for e in self.entries if not e.is_member]

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest([e for e in self.entries if e.split == split])

    def ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.entries)

    def require_both_classes(self) -> None:
        if not self.members() or not self.nonmembers():
            raise ValidationError("split needs at least one member and one non-member")

    def to_json(self) -> str:
        rows = [
            {"id": e.id, "path": e.path, "is_member": e.is_member, "split": e.split}
            for e in self.entries
        ]
        return json.dumps(rows, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(rows, list):
            raise FormatError("manifest must be a JSON array")
        entries = []
        for i, row in enumerate(rows):
            if not isinstance(row, dict):
                raise FormatError(f"manifest entry {i} is not an object")
            try:
                entries.append(
                    ManifestEntry(
                        id=str(row["id"]),
                        path=str(row["path"]),
                        is_member=bool(row["is_member"]),
                        split=str(row.get("split", UNSPLIT)),
                    )
                )
            except KeyError as exc:
                raise FormatError(f"manifest entry {i} misses key {exc}") from exc
        return cls(entries)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class SplitConfig:
    """How much of each membership class the adversary is assumed to know."""

    known_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.known_fraction <= 1.0:
            raise ValidationError("known_fraction must lie in (0, 1]")


def split_manifest(
    full: DatasetManifest, cfg: SplitConfig
) -> tuple[DatasetManifest, DatasetManifest]:
    """Assign a known fraction of each class to the attack-train split.

    Per class, floor(fraction * class size) entries (at least one) go to
    training; the disjoint remainder forms the evaluation split.  The
    assignment is a seeded shuffle, so it is reproducible and, at 0.5,
    mirrors the half-known adversary convention.
    """
    members = full.members()
    nonmembers = full.nonmembers()
    if len(members) < 2 or len(nonmembers) < 2:
        raise SplitError("need at least 2 members and 2 non-members to split")

    train: list[ManifestEntry] = []
    evaln: list[ManifestEntry] = []
    for class_idx, pool in enumerate((members, nonmembers)):
        take = max(1, int(cfg.known_fraction * len(pool)))
        if take >= len(pool):
            raise SplitError(
                f"known_fraction {cfg.known_fraction} leaves no evaluation data"
            )
        order = generator(cfg.seed * 2 + class_idx).permutation(len(pool))
        chosen = {int(i) for i in order[:take]}
        for i, entry in enumerate(pool):
            bucket, split = (
                (train, ATTACK_TRAIN) if i in chosen else (evaln, ATTACK_EVAL)
            )
            bucket.append(replace(entry, split=split))
    train_manifest = DatasetManifest(train)
    eval_manifest = DatasetManifest(evaln)
    train_manifest.require_both_classes()
    eval_manifest.require_both_classes()
    return train_manifest, eval_manifest
