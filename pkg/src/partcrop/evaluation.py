"""Attack evaluation: metrics, partial/shadow protocols, axis sweeps.

Members are the positive class; an attacker output >= threshold
predicts member.  Every protocol repeats over a seed list and reports
per-seed rows plus mean and sample standard deviation (ddof=1).  Rows
serialize to CSV as: axis_value,repeat_seed,acc,pre,rec,f1,tp,fp,tn,fn.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .attacker import MlpParams, MlpSpec, TrainConfig, predict_prob, train
from .encoder import SyntheticEncoder
from .errors import ConfigError, EvaluationError, ValidationError
from .features import KIND_PARTCROP, FEATURE_KINDS, FeatureSet
from .imagecrop import CropSpec
from .pipeline import (
    ABLATION_MODES,
    generate_features,
    rows_for_ids,
    slice_ablation,
)
from .tensorio import DatasetManifest, SplitConfig, split_manifest


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_defined: bool
    recall_defined: bool

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "MetricsReport":
        total = tp + fp + tn + fn
        if total <= 0:
            raise EvaluationError("empty evaluation set")
        acc = (tp + tn) / total
        p_def = (tp + fp) > 0
        r_def = (tp + fn) > 0
        pre = tp / (tp + fp) if p_def else 0.0
        rec = tp / (tp + fn) if r_def else 0.0
        f1 = 2.0 * pre * rec / (pre + rec) if (pre + rec) > 0.0 else 0.0
        return cls(tp, fp, tn, fn, acc, pre, rec, f1, p_def, r_def)

    def as_dict(self) -> dict:
        return {
            "acc": self.accuracy,
            "pre": self.precision,
            "rec": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
        }


def confusion(labels: np.ndarray, preds: np.ndarray) -> tuple[int, int, int, int]:
    labels = np.asarray(labels, dtype=bool)
    preds = np.asarray(preds, dtype=bool)
    if labels.shape != preds.shape:
        raise EvaluationError("labels and predictions disagree in length")
    tp = int(np.sum(labels & preds))
    fp = int(np.sum(~labels & preds))
    tn = int(np.sum(~labels & ~preds))
    fn = int(np.sum(labels & ~preds))
    return tp, fp, tn, fn


def evaluate(
    params: MlpParams, x: np.ndarray, labels, threshold: float = 0.5
) -> MetricsReport:
    """Score a trained attacker on labeled feature rows."""
    labels = np.asarray(labels)
    if labels.dtype != bool:
        raise EvaluationError("evaluation requires boolean membership labels")
    if len(labels) != len(x):
        raise EvaluationError("labels and features disagree in length")
    probs = predict_prob(params, np.asarray(x, dtype=np.float64))
    return MetricsReport.from_counts(*confusion(labels, probs >= threshold))


@dataclass(frozen=True)
class ExperimentConfig:
    attack_kind: str = KIND_PARTCROP
    crop_spec: CropSpec = CropSpec()
    n_views: int = 10
    ablation: str = "both"
    known_fraction: float = 0.5
    repeat_seeds: tuple = (1, 2, 3)
    attacker: dict = field(default_factory=dict)
    train: TrainConfig = TrainConfig()
    feature_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.attack_kind not in FEATURE_KINDS:
            raise ValidationError(f"unknown attack kind {self.attack_kind!r}")
        if self.ablation not in ABLATION_MODES:
            raise ValidationError(f"unknown ablation mode {self.ablation!r}")
        if not self.repeat_seeds:
            raise ValidationError("repeat_seeds must not be empty")
        if not 0.0 < self.known_fraction <= 1.0:
            raise ValidationError("known_fraction must be in (0, 1]")


@dataclass(frozen=True)
class RepeatResult:
    axis_value: str
    repeat_seed: int
    report: MetricsReport
    params: MlpParams
    history: tuple

    def row(self) -> dict:
        d = self.report.as_dict()
        d.pop("precision_defined")
        d.pop("recall_defined")
        return {"axis_value": self.axis_value, "repeat_seed": self.repeat_seed, **d}


@dataclass(frozen=True)
class ProtocolResult:
    repeats: tuple
    summary: dict

    def rows(self) -> list[dict]:
        return [r.row() for r in self.repeats]


_SUMMARY_FIELDS = ("acc", "pre", "rec", "f1")


def summarize(reports: list[MetricsReport]) -> dict:
    out = {}
    for name in _SUMMARY_FIELDS:
        vals = np.array([r.as_dict()[name] for r in reports], dtype=np.float64)
        out[f"{name}_mean"] = float(vals.mean())
        out[f"{name}_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    out["repeats"] = len(reports)
    return out


def _features_for(adapter, manifest, cfg: ExperimentConfig, images_root) -> FeatureSet:
    fs = generate_features(
        adapter,
        manifest,
        cfg.attack_kind,
        crop_spec=cfg.crop_spec,
        n_views=cfg.n_views,
        run_seed=cfg.feature_seed,
        images_root=images_root,
        jobs=cfg.jobs,
    )
    return slice_ablation(fs, cfg.ablation)


def _fit_one(
    fs: FeatureSet,
    train_ids: list[str],
    eval_ids: list[str],
    cfg: ExperimentConfig,
    seed: int,
    axis_value: str,
) -> RepeatResult:
    overlap = set(train_ids) & set(eval_ids)
    if overlap:
        raise EvaluationError(f"train/eval leak: {sorted(overlap)[:5]}")
    x_tr, y_tr = rows_for_ids(fs, train_ids)
    x_ev, y_ev = rows_for_ids(fs, eval_ids)
    spec = MlpSpec(in_dim=fs.vectors.shape[1], **cfg.attacker)
    params, history = train(spec, x_tr, y_tr, replace(cfg.train, seed=seed))
    report = evaluate(params, x_ev, y_ev, threshold=cfg.train.threshold)
    return RepeatResult(axis_value, seed, report, params, tuple(history))


def run_partial(
    adapter,
    manifest: DatasetManifest,
    cfg: ExperimentConfig,
    *,
    images_root=None,
    axis_value: str = "",
) -> ProtocolResult:
    """Partial-knowledge protocol: the attacker knows a fraction of the
    target's data; train on the known split, evaluate on the rest."""
    manifest.require_both_classes()
    fs = _features_for(adapter, manifest, cfg, images_root)
    repeats = []
    for seed in cfg.repeat_seeds:
        known, unknown = split_manifest(manifest, SplitConfig(cfg.known_fraction, seed=seed))
        repeats.append(
            _fit_one(fs, list(known.ids()), list(unknown.ids()), cfg, seed, axis_value)
        )
    return ProtocolResult(tuple(repeats), summarize([r.report for r in repeats]))


def run_shadow(
    shadow_adapter,
    shadow_manifest: DatasetManifest,
    target_adapter,
    target_manifest: DatasetManifest,
    cfg: ExperimentConfig,
    *,
    shadow_images_root=None,
    target_images_root=None,
    axis_value: str = "",
) -> ProtocolResult:
    """Shadow protocol: train on all of the shadow dataset, evaluate on
    the target's held-out split.  The two manifests must not share ids."""
    overlap = set(shadow_manifest.ids()) & set(target_manifest.ids())
    if overlap:
        raise ConfigError("eval.shadow", f"shadow/target ids overlap: {sorted(overlap)[:5]}")
    shadow_manifest.require_both_classes()
    target_manifest.require_both_classes()
    fs_shadow = _features_for(shadow_adapter, shadow_manifest, cfg, shadow_images_root)
    fs_target = _features_for(target_adapter, target_manifest, cfg, target_images_root)
    if fs_shadow.vectors.shape[1] != fs_target.vectors.shape[1]:
        raise ConfigError("eval.shadow", "shadow/target feature dims differ")
    train_ids = list(shadow_manifest.ids())
    repeats = []
    for seed in cfg.repeat_seeds:
        _, unknown = split_manifest(target_manifest, SplitConfig(cfg.known_fraction, seed=seed))
        eval_ids = list(unknown.ids())
        x_tr, y_tr = rows_for_ids(fs_shadow, train_ids)
        x_ev, y_ev = rows_for_ids(fs_target, eval_ids)
        spec = MlpSpec(in_dim=fs_shadow.vectors.shape[1], **cfg.attacker)
        params, history = train(spec, x_tr, y_tr, replace(cfg.train, seed=seed))
        report = evaluate(params, x_ev, y_ev, threshold=cfg.train.threshold)
        repeats.append(RepeatResult(axis_value, seed, report, params, tuple(history)))
    return ProtocolResult(tuple(repeats), summarize([r.report for r in repeats]))


SWEEP_AXES = ("m", "scale", "ablation", "ratio", "crop_scale_response")


def _axis_label(axis: str, value) -> str:
    if axis == "scale":
        lo, hi = value
        return f"{lo:g}-{hi:g}"
    if axis == "ablation":
        return str(value)
    if axis == "m":
        return str(int(value))
    return f"{float(value):g}"


def _apply_axis(adapter, cfg: ExperimentConfig, axis: str, value):
    if axis == "m":
        return adapter, replace(cfg, crop_spec=replace(cfg.crop_spec, m=int(value)))
    if axis == "scale":
        lo, hi = (float(value[0]), float(value[1]))
        return adapter, replace(cfg, crop_spec=replace(cfg.crop_spec, scale=(lo, hi)))
    if axis == "ablation":
        return adapter, replace(cfg, ablation=str(value))
    if axis == "ratio":
        return adapter, replace(cfg, known_fraction=float(value))
    if axis == "crop_scale_response":
        if not isinstance(adapter, SyntheticEncoder):
            raise ConfigError(
                "sweep.axis", "crop_scale_response sweeps need the synthetic encoder"
            )
        syn = SyntheticEncoder(replace(adapter.cfg, crop_scale_response=float(value)))
        return syn, cfg
    raise ConfigError("sweep.axis", f"unknown sweep axis {axis!r}")


@dataclass(frozen=True)
class SweepResult:
    axis: str
    results: tuple

    def rows(self) -> list[dict]:
        out = []
        for _, res in self.results:
            out.extend(res.rows())
        return out

    def summaries(self) -> dict:
        return {label: res.summary for label, res in self.results}


def sweep(
    adapter,
    manifest: DatasetManifest,
    cfg: ExperimentConfig,
    axis: str,
    values,
    *,
    images_root=None,
) -> SweepResult:
    """Run the partial protocol once per axis value with shared repeat
    seeds, so comparisons across values are paired."""
    if axis not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"unknown sweep axis {axis!r}")
    if not values:
        raise ConfigError("sweep.values", "sweep needs at least one value")
    results = []
    for value in values:
        adapter_v, cfg_v = _apply_axis(adapter, cfg, axis, value)
        label = _axis_label(axis, value)
        results.append(
            (label, run_partial(adapter_v, manifest, cfg_v, images_root=images_root, axis_value=label))
        )
    return SweepResult(axis, tuple(results))


CSV_FIELDS = ("axis_value", "repeat_seed", "acc", "pre", "rec", "f1", "tp", "fp", "tn", "fn")


def report_csv_text(rows: list[dict]) -> str:
    """Deterministic CSV rendering: fixed column order, 6-decimal rates,
    LF newlines."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        writer.writerow(
            [
                row["axis_value"],
                row["repeat_seed"],
                f"{row['acc']:.6f}",
                f"{row['pre']:.6f}",
                f"{row['rec']:.6f}",
                f"{row['f1']:.6f}",
                row["tp"],
                row["fp"],
                row["tn"],
                row["fn"],
            ]
        )
    return buf.getvalue()


def write_report_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(report_csv_text(rows))


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
