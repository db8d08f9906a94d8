"""End-to-end runs shared by the CLI and the acceptance checks."""

from __future__ import annotations

import copy
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as config_mod
from .datagen import LabeledDataset, generate, load_dataset, preset, write_features
from .errors import ConfigInvalid
from .evaluation import evaluate, to_json_dict
from .trainer import TrainResult, initial_encoder, train

SWEEP_AXES = ("d", "ladder_range", "delta", "gamma")

# Ablation grids: single radii, ensemble ranges (interval 0.05), intervals, momentum.
SWEEP_DEFAULTS = {
    "d": ["0.40", "0.45", "0.50", "0.55", "0.60"],
    "ladder_range": [
        "0.1-0.3", "0.2-0.3", "0.1-0.4", "0.2-0.4", "0.3-0.4", "0.1-0.5", "0.2-0.5",
        "0.3-0.5", "0.4-0.5", "0.1-0.6", "0.2-0.6", "0.3-0.6", "0.4-0.6", "0.5-0.6",
        "0.3-0.7", "0.4-0.7",
    ],
    "delta": ["0.05", "0.02", "0.01"],
    "gamma": ["0.1", "0.2", "0.3", "0.4", "0.5"],
}


@dataclass
class RunOutcome:
    result: TrainResult
    initial: dict
    final: dict

    def metrics(self) -> dict:
        return {
            "initial": to_json_dict(self.initial),
            "final": to_json_dict(self.final),
            "eps_scale": self.result.scale,
            "radii": list(self.result.radii),
            "epochs": len(self.result.log),
        }


def dataset_from_config(cfg: dict) -> LabeledDataset:
    data = cfg["data"]
    if data["features"]:
        return load_dataset(data["features"], data["split"])
    return generate(preset(data["preset"], **config_mod.synth_overrides(cfg)))


def run(cfg: dict, dataset: LabeledDataset | None = None, on_epoch=None) -> RunOutcome:
    if dataset is None:
        dataset = dataset_from_config(cfg)
    enc_cfg = config_mod.encoder_config(cfg)
    adam_cfg = config_mod.adam_config(cfg)
    train_cfg = config_mod.train_config(cfg)
    if enc_cfg.layer_sizes[0] != dataset.features.shape[1]:
        raise ConfigInvalid(
            f"encoder input size {enc_cfg.layer_sizes[0]} != feature dim {dataset.features.shape[1]}"
        )
    untrained = initial_encoder(enc_cfg, train_cfg.seed)
    initial = evaluate(dataset.eval_set(untrained.forward(dataset.features)))
    result = train(dataset.features, enc_cfg, adam_cfg, train_cfg, on_epoch)
    final = evaluate(dataset.eval_set(result.encoder.forward(dataset.features)))
    return RunOutcome(result, initial, final)


def axis_override(axis: str, value: str) -> dict:
    """Config overrides for one sweep setting."""
    if axis == "d":
        return {"train": {"d": float(value)}}
    if axis == "ladder_range":
        lo, hi = (float(v) for v in value.split("-"))
        return {"train": {"ladder": {"d_lo": lo, "d_hi": hi, "delta": 0.05}}}
    if axis == "delta":
        return {"train": {"ladder": {"d_lo": 0.4, "d_hi": 0.6, "delta": float(value)}}}
    if axis == "gamma":
        return {"train": {"gamma": float(value)}}
    raise ConfigInvalid(f"unknown sweep axis {axis!r}; valid axes: {', '.join(SWEEP_AXES)}")


def _sweep_cell(args):
    cfg, axis, value, seed = args
    cell = config_mod.merge(cfg, axis_override(axis, value))
    cell = config_mod.merge(cell, {"train": {"seed": seed}})
    out = run(cell)
    return to_json_dict(out.final)


def sweep(cfg: dict, axis: str, values=None, seeds=None, jobs: int = 1) -> list[dict]:
    """One row per setting; with several seeds, mean and sample std over seeds."""
    if axis not in SWEEP_AXES:
        raise ConfigInvalid(f"unknown sweep axis {axis!r}; valid axes: {', '.join(SWEEP_AXES)}")
    kind = cfg["train"]["loss_kind"]
    if axis == "d" and kind == "pc":
        raise ConfigInvalid("the d axis needs a single-radius loss (hcl or cluster_nce)")
    if axis in ("ladder_range", "delta") and kind != "pc":
        raise ConfigInvalid(f"the {axis} axis needs the pc loss")
    values = list(values or SWEEP_DEFAULTS[axis])
    seeds = list(seeds or [cfg["train"]["seed"]])
    for v in values:
        axis_override(axis, v)
    tasks = [(copy.deepcopy(cfg), axis, v, s) for v in values for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_sweep_cell, tasks))
    else:
        cells = [_sweep_cell(t) for t in tasks]

    rows = []
    for i, value in enumerate(values):
        chunk = cells[i * len(seeds):(i + 1) * len(seeds)]
        row = {"setting": value, "seed": ";".join(str(s) for s in seeds)}
        for key in ("map", "cmc1", "cmc5", "cmc10"):
            vals = np.array([c[key] for c in chunk])
            row[key] = float(vals.mean())
            if len(seeds) > 1:
                row[key + "_std"] = float(vals.std(ddof=1))
        rows.append(row)
    return rows


def sweep_csv(rows: list[dict]) -> str:
    cols = ["setting", "map", "cmc1", "cmc5", "cmc10", "seed"]
    if rows and "map_std" in rows[0]:
        cols += ["map_std", "cmc1_std", "cmc5_std", "cmc10_std"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(r[c] if isinstance(r[c], str) else f"{r[c]:.6f}" for c in cols))
    return "\n".join(lines) + "\n"


def write_run(outcome: RunOutcome, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "encoder.bin").write_bytes(outcome.result.encoder.to_bytes())
    write_features(out / "memory.feat", outcome.result.memory.snapshot())
    (out / "train_log.jsonl").write_text(outcome.result.log_jsonl())
    (out / "metrics.json").write_text(json.dumps(outcome.metrics(), indent=2) + "\n")
