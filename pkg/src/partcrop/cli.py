"""Command-line entry point.

Subcommands cover each pipeline stage (crops, encode, features, train,
eval) plus end-to-end runs (attack, sweep, synth-bench).  Every output
directory receives the resolved config for provenance.  Exit codes:
0 success, 2 validation/config error, 3 exchange timeout.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attacker import MlpSpec, load_attacker, save_attacker, save_history, train as train_mlp
from .config import RunConfig
from .encoder import SyntheticEncoder
from .errors import ConfigError, ExchangeTimeoutError, PartCropError
from .evaluation import (
    ProtocolResult,
    evaluate,
    report_csv_text,
    run_partial,
    run_shadow,
    summarize,
    sweep,
    write_summary_json,
)
from .features import KIND_ENCODERMI, KIND_PARTCROP, KIND_VARIANCE, FeatureSet
from .imagecrop import augment_views, load_image, sample_crops
from .pipeline import generate_features, slice_ablation, synthetic_manifest
from .presets import preset_config
from .rng import derive_seed
from .tensorio import DatasetManifest, write_tensor


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("config", "--config is required for this command")
    cfg = RunConfig.from_json_file(args.config)
    return cfg.with_overrides(seed=args.seed, jobs=args.jobs)


def _echo_config(cfg: RunConfig, out: Path) -> None:
    cfg.echo(out / "config.json")


def cmd_crops(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    if cfg.dataset.synthetic is not None:
        raise ConfigError("dataset", "crop generation needs real images, not a synthetic spec")
    manifest, images_root = cfg.build_manifest()
    _echo_config(cfg, out)
    index = []
    for entry in manifest.entries:
        img = load_image(str(Path(images_root or ".") / entry.path))
        spec = replace(cfg.crops, seed=derive_seed(cfg.seed, "crops", entry.id))
        files = []
        for j, crop in enumerate(sample_crops(img, spec)):
            name = f"{entry.id}.crop{j:04d}.pctf"
            write_tensor(crop, out / name)
            files.append(name)
        index.append({"id": entry.id, "files": files})
    with open(out / "crops.json", "w") as fh:
        json.dump({"m": cfg.crops.m, "images": index}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {sum(len(i['files']) for i in index)} crops for {len(index)} images")
    return 0


def cmd_encode(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    manifest, images_root = cfg.build_manifest()
    adapter = cfg.build_adapter()
    _echo_config(cfg, out)
    needs_pixels = not isinstance(adapter, SyntheticEncoder)
    index = []
    for entry in manifest.entries:
        img = None
        if needs_pixels:
            if images_root is None:
                raise ConfigError("dataset.images_dir", "exchange encoding needs real images")
            img = load_image(str(Path(images_root) / entry.path))
        files = {}
        emap = adapter.encode_image(img, entry.id, entry.is_member)
        files["feature_map"] = f"{entry.id}.fmap.pctf"
        write_tensor(emap.feature_map, out / files["feature_map"])
        if cfg.feature_kind == KIND_PARTCROP:
            spec = replace(cfg.crops, seed=derive_seed(cfg.seed, "crops", entry.id))
            crops = sample_crops(img, spec) if img is not None else [None] * spec.m
            parts = np.stack(adapter.encode_crops(crops, entry.id, entry.is_member))
            files["parts"] = f"{entry.id}.parts.pctf"
            write_tensor(parts, out / files["parts"])
        elif cfg.feature_kind in (KIND_ENCODERMI, KIND_VARIANCE):
            views = (
                augment_views(img, cfg.n_views, derive_seed(cfg.seed, "views", entry.id))
                if img is not None
                else [None] * cfg.n_views
            )
            vecs = np.stack(adapter.encode_crops(views, entry.id, entry.is_member))
            files["views"] = f"{entry.id}.views.pctf"
            write_tensor(vecs, out / files["views"])
        index.append({"id": entry.id, "files": files})
    with open(out / "encode.json", "w") as fh:
        json.dump({"entries": index}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"encoded {len(index)} images")
    return 0


def cmd_features(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    manifest, images_root = cfg.build_manifest()
    adapter = cfg.build_adapter()
    _echo_config(cfg, out)
    fs = generate_features(
        adapter,
        manifest,
        cfg.feature_kind,
        crop_spec=cfg.crops,
        n_views=cfg.n_views,
        run_seed=cfg.seed,
        images_root=images_root,
        jobs=cfg.jobs,
    )
    fs = slice_ablation(fs, cfg.ablation)
    fs.save(out / "features")
    print(f"wrote {fs.vectors.shape[0]} features of dim {fs.vectors.shape[1]}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    fs = FeatureSet.load(Path(args.features))
    _echo_config(cfg, out)
    spec = MlpSpec(in_dim=fs.vectors.shape[1], **cfg.attacker)
    params, history = train_mlp(
        spec,
        fs.vectors.astype(np.float64),
        fs.labels,
        replace(cfg.train, seed=cfg.seed),
    )
    save_attacker(out / "attacker", params)
    save_history(out / "history.csv", history)
    print(f"trained attacker on {fs.vectors.shape[0]} samples, final loss {history[-1]['loss']:.6f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    fs = FeatureSet.load(Path(args.features))
    params = load_attacker(Path(args.attacker))
    _echo_config(cfg, out)
    report = evaluate(params, fs.vectors.astype(np.float64), fs.labels, cfg.train.threshold)
    row = {"axis_value": "", "repeat_seed": cfg.seed, **report.as_dict()}
    row.pop("precision_defined")
    row.pop("recall_defined")
    _write_report(out, [row], {"": summarize([report])}, {"feature_kind": fs.kind, "feature_dim": int(fs.vectors.shape[1])})
    print(f"acc={report.accuracy:.4f} f1={report.f1:.4f}")
    return 0


def _write_report(out: Path, rows: list[dict], summaries: dict, extra: dict) -> None:
    with open(out / "report.csv", "w", newline="") as fh:
        fh.write(report_csv_text(rows))
    doc = {**extra, "rows": rows, "summary": summaries}
    with open(out / "report.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _shadow_pieces(cfg: RunConfig):
    sh = cfg.shadow
    if sh.get("synthetic") is not None:
        syn = sh["synthetic"]
        manifest = synthetic_manifest(
            syn.get("n_members", 2000), syn.get("n_nonmembers", 2000), syn.get("prefix", "shadow")
        )
        images_root = None
    elif sh.get("manifest") is not None:
        manifest = DatasetManifest.load(sh["manifest"])
        images_root = sh.get("images_dir")
    else:
        raise ConfigError("eval.shadow", "need a manifest path or a synthetic spec")
    if cfg.encoder.kind == "synthetic":
        adapter = SyntheticEncoder(replace(cfg.encoder.synthetic_config(), seed=sh.get("encoder_seed", 1)))
    else:
        adapter = cfg.build_adapter()
    return adapter, manifest, images_root


def _run_configured(cfg: RunConfig) -> tuple[list[dict], dict, ProtocolResult | None]:
    manifest, images_root = cfg.build_manifest()
    adapter = cfg.build_adapter()
    exp = cfg.build_experiment()
    if cfg.sweep_axis is not None:
        res = sweep(adapter, manifest, exp, cfg.sweep_axis, cfg.sweep_values, images_root=images_root)
        return res.rows(), res.summaries(), None
    if cfg.setting == "shadow":
        sh_adapter, sh_manifest, sh_root = _shadow_pieces(cfg)
        res = run_shadow(
            sh_adapter,
            sh_manifest,
            adapter,
            manifest,
            exp,
            shadow_images_root=sh_root,
            target_images_root=images_root,
        )
    else:
        res = run_partial(adapter, manifest, exp, images_root=images_root)
    return res.rows(), {"": res.summary}, res


def _feature_dim(cfg: RunConfig) -> int:
    if cfg.feature_kind == KIND_PARTCROP:
        dim = 2 * cfg.crops.m
        if cfg.ablation != "both":
            dim //= 2
        return dim
    if cfg.feature_kind == KIND_ENCODERMI:
        return cfg.n_views * (cfg.n_views - 1) // 2
    return cfg.encoder.dim


def _run_and_report(cfg: RunConfig, out: Path) -> None:
    rows, summaries, res = _run_configured(cfg)
    dim = res.repeats[0].params.spec.in_dim if res is not None else _feature_dim(cfg)
    extra = {
        "setting": cfg.setting if cfg.sweep_axis is None else f"sweep:{cfg.sweep_axis}",
        "feature_kind": cfg.feature_kind,
        "feature_dim": dim,
    }
    _write_report(out, rows, summaries, extra)
    write_summary_json(out / "summary.json", summaries)
    if res is not None:
        for rep in res.repeats:
            save_attacker(out / f"attacker_s{rep.repeat_seed}", rep.params)
            save_history(out / f"history_s{rep.repeat_seed}.csv", list(rep.history))


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    _echo_config(cfg, out)
    _run_and_report(cfg, out)
    with open(out / "report.json") as fh:
        doc = json.load(fh)
    first = next(iter(doc["summary"].values()))
    print(f"attack done: mean acc {first['acc_mean']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if cfg.sweep_axis is None:
        raise ConfigError("sweep.axis", "sweep command needs a sweep axis")
    out = _out_dir(args)
    _echo_config(cfg, out)
    _run_and_report(cfg, out)
    print(f"sweep over {cfg.sweep_axis} done")
    return 0


def cmd_synth_bench(args) -> int:
    cfg = preset_config(args.preset)
    cfg = cfg.with_overrides(seed=args.seed, jobs=args.jobs)
    out = _out_dir(args)
    _echo_config(cfg, out)
    _run_and_report(cfg, out)
    with open(out / "report.json") as fh:
        doc = json.load(fh)
    for label, summary in sorted(doc["summary"].items()):
        tag = label or args.preset
        print(f"{tag}: mean acc {summary['acc_mean']:.4f} (sd {summary['acc_sd']:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partcrop",
        description="Membership inference against visual encoders via part crops.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", default=None, help="path to a run config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=None, help="worker count for feature generation")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("crops", help="sample part crops for every image")
    common(p)
    p.set_defaults(fn=cmd_crops)

    p = sub.add_parser("encode", help="run the encoder over images and crops")
    common(p)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("features", help="compute membership features")
    common(p)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("train", help="train an attacker on saved features")
    common(p)
    p.add_argument("--features", required=True, help="feature file base path (without extension)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved attacker on saved features")
    common(p)
    p.add_argument("--features", required=True, help="feature file base path (without extension)")
    p.add_argument("--attacker", required=True, help="attacker weight directory")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("attack", help="end-to-end attack run")
    common(p)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("sweep", help="run the configured axis sweep")
    common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("synth-bench", help="run a pinned synthetic benchmark preset")
    p.add_argument("--preset", required=True, choices=["gap03", "gap0", "scsr_sweep"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ExchangeTimeoutError as exc:
        print(f"exchange timeout: {exc}", file=sys.stderr)
        return 3
    except PartCropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
