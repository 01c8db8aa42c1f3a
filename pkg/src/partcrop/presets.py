"""Pinned synthetic benchmark presets.

Each preset is a complete, resolved run document: fixed dataset sizes,
encoder gap, attacker, and repeat seeds.  Rerunning a preset must
reproduce its report files byte for byte.

gap03       member/non-member response gap 0.3; the attack should work.
gap0        zero gap; accuracy must sit at chance.
scsr_sweep  crop_scale_response 1.0 -> 0.6 -> 0.3; accuracy must not rise.
"""

from __future__ import annotations

import copy

from .config import RunConfig
from .errors import ConfigError

_BASE = {
    "seed": 0,
    "jobs": 1,
    "dataset": {"synthetic": {"n_members": 2000, "n_nonmembers": 2000, "prefix": "syn"}},
    "crops": {"m": 32},
    "encoder": {
        "kind": "synthetic",
        "dim": 64,
        "map_rows": 16,
        "alpha_member": 0.8,
        "alpha_nonmember": 0.5,
        "noise_sigma": 0.1,
        "crop_scale_response": 1.0,
        "seed": 0,
    },
    "features": {"kind": "partcrop", "n_views": 10, "ablation": "both"},
    "attacker": {"d": 512, "variant": "default", "activation": "relu", "norm": "none", "v2": False},
    "train": {"epochs": 100, "batch": 100, "lr": 1e-3, "weight_decay": 5e-4, "threshold": 0.5},
    "eval": {"setting": "partial", "known_fraction": 0.5, "repeat_seeds": [1, 2, 3]},
    "sweep": {"axis": None, "values": []},
}


def _gap03() -> dict:
    return copy.deepcopy(_BASE)


def _gap0() -> dict:
    doc = copy.deepcopy(_BASE)
    doc["encoder"]["alpha_member"] = 0.5
    doc["encoder"]["alpha_nonmember"] = 0.5
    return doc


def _scsr_sweep() -> dict:
    doc = copy.deepcopy(_BASE)
    doc["sweep"] = {"axis": "crop_scale_response", "values": [1.0, 0.6, 0.3]}
    return doc


PRESETS = {
    "gap03": _gap03,
    "gap0": _gap0,
    "scsr_sweep": _scsr_sweep,
}


def preset_doc(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError("preset", f"must be one of {sorted(PRESETS)}")
    return PRESETS[name]()


def preset_config(name: str) -> RunConfig:
    return RunConfig.from_doc(preset_doc(name))
