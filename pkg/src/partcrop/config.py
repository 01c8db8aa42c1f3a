"""Run configuration: one JSON document drives every CLI command.

The document has fixed sections (dataset, crops, encoder, features,
attacker, train, eval, sweep) plus top-level seed/jobs.  Unknown keys
are rejected with the full dotted path, and every accepted value is
echoed back in resolved form so a run directory records exactly what
it executed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .attacker import ACTIVATIONS, NORMS, VARIANTS, TrainConfig
from .encoder import ExchangeEncoder, SyntheticEncoder, SyntheticEncoderConfig
from .errors import ConfigError, ValidationError
from .evaluation import SWEEP_AXES, ExperimentConfig
from .features import FEATURE_KINDS, KIND_PARTCROP
from .imagecrop import CropSpec
from .pipeline import ABLATION_MODES, synthetic_manifest
from .tensorio import DatasetManifest


def _check_keys(doc: dict, allowed, path: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _get_int(doc, key, path, default, lo=None, hi=None):
    val = doc.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}.{key}", "expected an integer")
    if lo is not None and val < lo:
        raise ConfigError(f"{path}.{key}", f"must be >= {lo}")
    if hi is not None and val > hi:
        raise ConfigError(f"{path}.{key}", f"must be <= {hi}")
    return val


def _get_num(doc, key, path, default, lo=None, lo_open=False, hi=None):
    val = doc.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}", "expected a number")
    val = float(val)
    if lo is not None and (val <= lo if lo_open else val < lo):
        op = ">" if lo_open else ">="
        raise ConfigError(f"{path}.{key}", f"must be {op} {lo}")
    if hi is not None and val > hi:
        raise ConfigError(f"{path}.{key}", f"must be <= {hi}")
    return val


def _get_bool(doc, key, path, default):
    val = doc.get(key, default)
    if not isinstance(val, bool):
        raise ConfigError(f"{path}.{key}", "expected a boolean")
    return val


def _get_choice(doc, key, path, default, choices):
    val = doc.get(key, default)
    if val not in choices:
        raise ConfigError(f"{path}.{key}", f"must be one of {sorted(choices)}")
    return val


def _get_str(doc, key, path, default):
    val = doc.get(key, default)
    if val is not None and not isinstance(val, str):
        raise ConfigError(f"{path}.{key}", "expected a string")
    return val


def _get_pair(doc, key, path, default, *, integral=False):
    val = doc.get(key, default)
    if not isinstance(val, (list, tuple)) or len(val) != 2:
        raise ConfigError(f"{path}.{key}", "expected a pair [lo, hi]")
    out = []
    for item in val:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError(f"{path}.{key}", "expected numeric entries")
        out.append(int(item) if integral else float(item))
    return tuple(out)


@dataclass(frozen=True)
class DatasetSection:
    manifest: str | None = None
    images_dir: str | None = None
    synthetic: dict | None = None

    @classmethod
    def from_doc(cls, doc: dict, path: str = "dataset") -> "DatasetSection":
        _check_keys(doc, {"manifest", "images_dir", "synthetic"}, path)
        manifest = _get_str(doc, "manifest", path, None)
        images_dir = _get_str(doc, "images_dir", path, None)
        synthetic = doc.get("synthetic")
        if synthetic is not None:
            _check_keys(synthetic, {"n_members", "n_nonmembers", "prefix"}, f"{path}.synthetic")
            synthetic = {
                "n_members": _get_int(synthetic, "n_members", f"{path}.synthetic", None, lo=2),
                "n_nonmembers": _get_int(synthetic, "n_nonmembers", f"{path}.synthetic", None, lo=2),
                "prefix": _get_str(synthetic, "prefix", f"{path}.synthetic", "syn"),
            }
        if manifest is not None and synthetic is not None:
            raise ConfigError(path, "give either manifest or synthetic, not both")
        return cls(manifest, images_dir, synthetic)

    def resolved(self) -> dict:
        return {
            "manifest": self.manifest,
            "images_dir": self.images_dir,
            "synthetic": dict(self.synthetic) if self.synthetic else None,
        }


@dataclass(frozen=True)
class EncoderSection:
    kind: str = "synthetic"
    dim: int = 64
    map_rows: int = 16
    alpha_member: float = 0.8
    alpha_nonmember: float = 0.5
    noise_sigma: float = 0.1
    crop_scale_response: float = 1.0
    seed: int = 0
    exchange_dir: str | None = None
    timeout_s: float = 600.0

    _KEYS = {
        "kind",
        "dim",
        "map_rows",
        "alpha_member",
        "alpha_nonmember",
        "noise_sigma",
        "crop_scale_response",
        "seed",
        "exchange_dir",
        "timeout_s",
    }

    @classmethod
    def from_doc(cls, doc: dict, path: str = "encoder") -> "EncoderSection":
        _check_keys(doc, cls._KEYS, path)
        kind = _get_choice(doc, "kind", path, "synthetic", ("synthetic", "exchange"))
        sec = cls(
            kind=kind,
            dim=_get_int(doc, "dim", path, 64, lo=1),
            map_rows=_get_int(doc, "map_rows", path, 16, lo=1),
            alpha_member=_get_num(doc, "alpha_member", path, 0.8, lo=0.0),
            alpha_nonmember=_get_num(doc, "alpha_nonmember", path, 0.5, lo=0.0),
            noise_sigma=_get_num(doc, "noise_sigma", path, 0.1, lo=0.0),
            crop_scale_response=_get_num(doc, "crop_scale_response", path, 1.0, lo=0.0, lo_open=True),
            seed=_get_int(doc, "seed", path, 0, lo=0),
            exchange_dir=_get_str(doc, "exchange_dir", path, None),
            timeout_s=_get_num(doc, "timeout_s", path, 600.0, lo=0.0, lo_open=True),
        )
        if kind == "exchange" and sec.exchange_dir is None:
            raise ConfigError(f"{path}.exchange_dir", "required when kind is exchange")
        return sec

    def synthetic_config(self) -> SyntheticEncoderConfig:
        try:
            return SyntheticEncoderConfig(
                dim=self.dim,
                map_rows=self.map_rows,
                alpha_member=self.alpha_member,
                alpha_nonmember=self.alpha_nonmember,
                noise_sigma=self.noise_sigma,
                crop_scale_response=self.crop_scale_response,
                seed=self.seed,
            )
        except ValidationError as exc:
            raise ConfigError("encoder", str(exc)) from exc

    def build(self):
        if self.kind == "synthetic":
            return SyntheticEncoder(self.synthetic_config())
        return ExchangeEncoder(self.exchange_dir, timeout_s=self.timeout_s)

    def resolved(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "map_rows": self.map_rows,
            "alpha_member": self.alpha_member,
            "alpha_nonmember": self.alpha_nonmember,
            "noise_sigma": self.noise_sigma,
            "crop_scale_response": self.crop_scale_response,
            "seed": self.seed,
            "exchange_dir": self.exchange_dir,
            "timeout_s": self.timeout_s,
        }


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1
    dataset: DatasetSection = field(default_factory=DatasetSection)
    crops: CropSpec = CropSpec()
    encoder: EncoderSection = field(default_factory=EncoderSection)
    feature_kind: str = KIND_PARTCROP
    n_views: int = 10
    ablation: str = "both"
    attacker: dict = field(default_factory=dict)
    train: TrainConfig = TrainConfig()
    setting: str = "partial"
    known_fraction: float = 0.5
    repeat_seeds: tuple = (1, 2, 3)
    shadow: dict | None = None
    sweep_axis: str | None = None
    sweep_values: tuple = ()

    _SECTIONS = {"seed", "jobs", "dataset", "crops", "encoder", "features", "attacker", "train", "eval", "sweep"}

    @classmethod
    def from_doc(cls, doc: dict) -> "RunConfig":
        _check_keys(doc, cls._SECTIONS, "")
        seed = _get_int(doc, "seed", "", 0, lo=0)
        jobs = _get_int(doc, "jobs", "", 1, lo=1)
        dataset = DatasetSection.from_doc(doc.get("dataset", {}))

        cdoc = doc.get("crops", {})
        _check_keys(cdoc, {"m", "scale", "out_size", "aspect"}, "crops")
        m = _get_int(cdoc, "m", "crops", 128, lo=1)
        scale = _get_pair(cdoc, "scale", "crops", (0.08, 0.2))
        out_size = _get_pair(cdoc, "out_size", "crops", (16, 16), integral=True)
        aspect = _get_pair(cdoc, "aspect", "crops", (0.75, 4.0 / 3.0))
        try:
            crops = CropSpec(m=m, scale=scale, out_size=out_size, aspect=aspect, seed=seed)
        except ValidationError as exc:
            raise ConfigError("crops", str(exc)) from exc

        encoder = EncoderSection.from_doc(doc.get("encoder", {}))
        if encoder.kind == "synthetic":
            encoder.synthetic_config()

        fdoc = doc.get("features", {})
        _check_keys(fdoc, {"kind", "n_views", "ablation"}, "features")
        feature_kind = _get_choice(fdoc, "kind", "features", KIND_PARTCROP, FEATURE_KINDS)
        n_views = _get_int(fdoc, "n_views", "features", 10, lo=2)
        ablation = _get_choice(fdoc, "ablation", "features", "both", ABLATION_MODES)

        adoc = doc.get("attacker", {})
        _check_keys(adoc, {"d", "variant", "activation", "norm", "v2"}, "attacker")
        attacker = {
            "d": _get_int(adoc, "d", "attacker", 512, lo=4),
            "variant": _get_choice(adoc, "variant", "attacker", "default", VARIANTS),
            "activation": _get_choice(adoc, "activation", "attacker", "relu", ACTIVATIONS),
            "norm": _get_choice(adoc, "norm", "attacker", "none", NORMS),
            "v2": _get_bool(adoc, "v2", "attacker", False),
        }
        if attacker["d"] % 4 != 0:
            raise ConfigError("attacker.d", "must be divisible by 4")

        tdoc = doc.get("train", {})
        _check_keys(tdoc, {"epochs", "batch", "lr", "weight_decay", "threshold"}, "train")
        try:
            train = TrainConfig(
                epochs=_get_int(tdoc, "epochs", "train", 100, lo=1),
                batch=_get_int(tdoc, "batch", "train", 100, lo=2),
                lr=_get_num(tdoc, "lr", "train", 1e-3, lo=0.0, lo_open=True),
                weight_decay=_get_num(tdoc, "weight_decay", "train", 5e-4, lo=0.0),
                threshold=_get_num(tdoc, "threshold", "train", 0.5, lo=0.0, lo_open=True, hi=1.0),
                seed=seed,
            )
        except ValidationError as exc:
            raise ConfigError("train", str(exc)) from exc

        edoc = doc.get("eval", {})
        _check_keys(edoc, {"setting", "known_fraction", "repeat_seeds", "shadow"}, "eval")
        setting = _get_choice(edoc, "setting", "eval", "partial", ("partial", "shadow"))
        known_fraction = _get_num(edoc, "known_fraction", "eval", 0.5, lo=0.0, lo_open=True, hi=1.0)
        seeds_doc = edoc.get("repeat_seeds", [1, 2, 3])
        if (
            not isinstance(seeds_doc, (list, tuple))
            or not seeds_doc
            or any(isinstance(s, bool) or not isinstance(s, int) for s in seeds_doc)
        ):
            raise ConfigError("eval.repeat_seeds", "expected a non-empty list of integers")
        shadow = edoc.get("shadow")
        if shadow is not None:
            _check_keys(shadow, {"manifest", "images_dir", "synthetic", "encoder_seed"}, "eval.shadow")
            shadow = {
                "manifest": _get_str(shadow, "manifest", "eval.shadow", None),
                "images_dir": _get_str(shadow, "images_dir", "eval.shadow", None),
                "synthetic": shadow.get("synthetic"),
                "encoder_seed": _get_int(shadow, "encoder_seed", "eval.shadow", 1, lo=0),
            }
            if shadow["synthetic"] is not None:
                _check_keys(
                    shadow["synthetic"],
                    {"n_members", "n_nonmembers", "prefix"},
                    "eval.shadow.synthetic",
                )
        if setting == "shadow" and shadow is None:
            raise ConfigError("eval.shadow", "required when setting is shadow")

        sdoc = doc.get("sweep", {})
        _check_keys(sdoc, {"axis", "values"}, "sweep")
        sweep_axis = sdoc.get("axis")
        if sweep_axis is not None and sweep_axis not in SWEEP_AXES:
            raise ConfigError("sweep.axis", f"must be one of {sorted(SWEEP_AXES)}")
        sweep_values = sdoc.get("values", [])
        if not isinstance(sweep_values, (list, tuple)):
            raise ConfigError("sweep.values", "expected a list")
        if sweep_axis is not None and not sweep_values:
            raise ConfigError("sweep.values", "sweep needs at least one value")
        sweep_values = tuple(
            tuple(v) if isinstance(v, (list, tuple)) else v for v in sweep_values
        )

        return cls(
            seed=seed,
            jobs=jobs,
            dataset=dataset,
            crops=crops,
            encoder=encoder,
            feature_kind=feature_kind,
            n_views=n_views,
            ablation=ablation,
            attacker=attacker,
            train=train,
            setting=setting,
            known_fraction=known_fraction,
            repeat_seeds=tuple(seeds_doc),
            shadow=shadow,
            sweep_axis=sweep_axis,
            sweep_values=sweep_values,
        )

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
        return cls.from_doc(doc)

    def with_overrides(self, seed: int | None = None, jobs: int | None = None) -> "RunConfig":
        doc = self.resolved()
        if seed is not None:
            doc["seed"] = seed
        if jobs is not None:
            doc["jobs"] = jobs
        return RunConfig.from_doc(doc)

    def resolved(self) -> dict:
        return {
            "seed": self.seed,
            "jobs": self.jobs,
            "dataset": self.dataset.resolved(),
            "crops": {
                "m": self.crops.m,
                "scale": list(self.crops.scale),
                "out_size": list(self.crops.out_size),
                "aspect": list(self.crops.aspect),
            },
            "encoder": self.encoder.resolved(),
            "features": {
                "kind": self.feature_kind,
                "n_views": self.n_views,
                "ablation": self.ablation,
            },
            "attacker": dict(self.attacker),
            "train": {
                "epochs": self.train.epochs,
                "batch": self.train.batch,
                "lr": self.train.lr,
                "weight_decay": self.train.weight_decay,
                "threshold": self.train.threshold,
            },
            "eval": {
                "setting": self.setting,
                "known_fraction": self.known_fraction,
                "repeat_seeds": list(self.repeat_seeds),
                "shadow": self.shadow,
            },
            "sweep": {
                "axis": self.sweep_axis,
                "values": [list(v) if isinstance(v, tuple) else v for v in self.sweep_values],
            },
        }

    def echo(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.resolved(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def build_adapter(self):
        return self.encoder.build()

    def build_manifest(self) -> tuple[DatasetManifest, str | None]:
        if self.dataset.synthetic is not None:
            syn = self.dataset.synthetic
            return (
                synthetic_manifest(syn["n_members"], syn["n_nonmembers"], syn["prefix"]),
                None,
            )
        if self.dataset.manifest is None:
            raise ConfigError("dataset", "need either a manifest path or a synthetic spec")
        return DatasetManifest.load(self.dataset.manifest), self.dataset.images_dir

    def build_experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            attack_kind=self.feature_kind,
            crop_spec=self.crops,
            n_views=self.n_views,
            ablation=self.ablation,
            known_fraction=self.known_fraction,
            repeat_seeds=self.repeat_seeds,
            attacker=self.attacker,
            train=self.train,
            feature_seed=self.seed,
            jobs=self.jobs,
        )
