"""Run configuration: a JSON file whose sections mirror the library's config dataclasses."""

from __future__ import annotations

import copy
import json
from dataclasses import fields
from pathlib import Path

from .encoder import AdamConfig, EncoderConfig
from .ensemble import GranularityLadder
from .errors import ConfigInvalid
from .trainer import TrainConfig

DEFAULTS = {
    "data": {
        "preset": "medium",
        "features": None,
        "split": None,
        "num_ids": None,
        "samples_per_id": None,
        "dim": None,
        "num_cams": None,
        "intra_sigma": None,
        "cam_sigma": None,
        "seed": 7,
    },
    "encoder": {"layer_sizes": [32, 64, 32], "identity_mode": False, "init": "mirrored"},
    "adam": {"lr": 3.5e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "weight_decay": 5e-4},
    "train": {
        "epochs": 50,
        "p_identities": 16,
        "k_instances": 4,
        "iters_per_epoch": None,
        "loss_kind": "pc",
        "ladder": "0.4:0.6:0.05",
        "d": 0.5,
        "min_pts": 4,
        "tau": 0.05,
        "gamma": 0.2,
        "jitter_sigma": 0.05,
        "seed": 7,
        "eps_scale": "auto",
        "refresh_stale": True,
        "record_timing": False,
    },
    "output_dir": None,
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def merge(base: dict, override: dict, path: str = "") -> dict:
    """Recursively merge ``override`` into ``base``; unknown keys are rejected."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigInvalid(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigInvalid(f"config key {where!r} must be an object")
            out[key] = merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def load(path=None, overrides: dict | None = None) -> dict:
    cfg = default_config()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigInvalid(f"{path}: top level must be an object")
        cfg = merge(cfg, data)
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg


def _ladder(value) -> GranularityLadder:
    if isinstance(value, GranularityLadder):
        return value
    if isinstance(value, dict):
        try:
            return GranularityLadder(float(value["d_lo"]), float(value["d_hi"]), float(value["delta"]))
        except KeyError as exc:
            raise ConfigInvalid(f"ladder object is missing {exc}") from None
    return GranularityLadder.parse(value)


def _build(cls, section: dict):
    names = {f.name for f in fields(cls) if f.init}
    try:
        return cls(**{k: v for k, v in section.items() if k in names})
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None


def encoder_config(cfg: dict) -> EncoderConfig:
    enc = dict(cfg["encoder"])
    enc["layer_sizes"] = tuple(enc["layer_sizes"])
    return _build(EncoderConfig, enc)


def adam_config(cfg: dict) -> AdamConfig:
    return _build(AdamConfig, cfg["adam"])


def train_config(cfg: dict) -> TrainConfig:
    tr = dict(cfg["train"])
    tr["ladder"] = _ladder(tr["ladder"])
    return _build(TrainConfig, tr)


def synth_overrides(cfg: dict) -> dict:
    keys = ("num_ids", "samples_per_id", "dim", "num_cams", "intra_sigma", "cam_sigma", "seed")
    return {k: cfg["data"][k] for k in keys if cfg["data"][k] is not None}
