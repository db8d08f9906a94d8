"""Command-line entry point: ``hybridcl <command> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from . import config as config_mod
from .clustering import DbscanParams, dbscan
from .datagen import generate, preset, read_features, save_dataset
from .encoder import Encoder
from .ensemble import GranularityLadder, build_priority
from .errors import ConfigInvalid, HybridCLError
from .evaluation import evaluate, to_json_dict
from .experiment import SWEEP_AXES, dataset_from_config, run, sweep, sweep_csv, write_run
from .numcore import l2_normalize
from .trainer import calibrate_scale

OUTPUT_ROOT_ENV = "HYBRIDCL_OUTPUT_ROOT"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_dir(args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / command


def _claim(path: Path, force: bool, names) -> None:
    """Refuse to overwrite existing outputs unless --force was given."""
    existing = [n for n in names if (path / n).exists()]
    if existing and not force:
        raise ConfigInvalid(f"{path / existing[0]} exists; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _common_run_args(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=["easy", "medium", "hard"])
    p.add_argument("--data", help="directory written by `generate`")
    p.add_argument("--features", help="FEATv1 or CSV feature file")
    p.add_argument("--split", help="split manifest (JSON) for --features")
    p.add_argument("--seed", type=int, help="seed for data generation and training")
    p.add_argument("--loss", choices=["cluster_nce", "hcl", "pc"])
    p.add_argument("--d", type=float, help="single neighbourhood radius (nominal units)")
    p.add_argument("--ladder", help="granularity ladder lo:hi:delta (nominal units)")
    p.add_argument("--eps-scale", help="'auto' or a factor applied to d / ladder radii")
    p.add_argument("--min-pts", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--iters", type=int, help="iterations per epoch (default: auto)")
    p.add_argument("--lr", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--jitter", type=float, help="feature-space jitter sigma")
    p.add_argument("--layers", help="comma-separated layer sizes, e.g. 32,64,32")
    p.add_argument("--identity", action="store_true", help="use the identity encoder")
    p.add_argument("--timing", action="store_true", help="record wall_ms in the train log")


def _run_config(args) -> dict:
    over: dict = {"data": {}, "train": {}, "adam": {}, "encoder": {}}
    if args.preset:
        over["data"]["preset"] = args.preset
    if args.data:
        over["data"]["features"] = str(Path(args.data) / "features.feat")
        over["data"]["split"] = str(Path(args.data) / "split.json")
    if args.features:
        over["data"]["features"] = args.features
    if args.split:
        over["data"]["split"] = args.split
    if args.seed is not None:
        over["data"]["seed"] = args.seed
        over["train"]["seed"] = args.seed
    simple = {
        "loss": ("train", "loss_kind"), "d": ("train", "d"), "ladder": ("train", "ladder"),
        "min_pts": ("train", "min_pts"), "epochs": ("train", "epochs"),
        "iters": ("train", "iters_per_epoch"), "gamma": ("train", "gamma"),
        "tau": ("train", "tau"), "jitter": ("train", "jitter_sigma"), "lr": ("adam", "lr"),
    }
    for flag, (section, key) in simple.items():
        value = getattr(args, flag)
        if value is not None:
            over[section][key] = value
    if args.eps_scale is not None:
        over["train"]["eps_scale"] = "auto" if args.eps_scale == "auto" else _positive(args.eps_scale)
    if args.layers:
        over["encoder"]["layer_sizes"] = [int(v) for v in args.layers.split(",")]
    if args.identity:
        over["encoder"]["identity_mode"] = True
    if args.timing:
        over["train"]["record_timing"] = True
    return config_mod.load(args.config, over)


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigInvalid(f"expected a number, got {text!r}") from None
    if value <= 0:
        raise ConfigInvalid(f"expected a positive number, got {text!r}")
    return value


def cmd_generate(args) -> None:
    cfg = preset(args.preset, **({"seed": args.seed} if args.seed is not None else {}))
    out = _out_dir(args, "generate")
    _claim(out, args.force, ["features.feat", "split.json"])
    ds = generate(cfg)
    meta = {"preset": args.preset, **{k: getattr(cfg, k) for k in cfg.__dataclass_fields__}}
    save_dataset(out, ds, meta)
    _emit({"out": str(out), "samples": int(ds.features.shape[0]), "dim": int(ds.features.shape[1]),
           "queries": int(ds.query.size), "gallery": int(ds.gallery.size)})


def _load_matrix(args):
    path = Path(args.data) / "features.feat" if args.data else args.features
    if path is None:
        raise ConfigInvalid("pass --data DIR or --features FILE")
    feats, _, _ = read_features(path)
    return l2_normalize(feats)


def cmd_cluster(args) -> None:
    if args.d <= 0 or args.d >= 2:
        raise ConfigInvalid(f"d must lie in (0, 2), got {args.d}")
    feats = _load_matrix(args)
    out = _out_dir(args, "cluster")
    _claim(out, args.force, ["labels.csv", "summary.json"])
    labeling = dbscan(feats, DbscanParams(args.d, args.min_pts))
    (out / "labels.csv").write_text(labeling.to_csv())
    summary = {"num_clusters": labeling.num_clusters, "noise_fraction": labeling.noise_fraction,
               "d": args.d, "min_pts": args.min_pts}
    if args.calibrate:
        summary["eps_scale"] = calibrate_scale(feats, args.min_pts)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _emit(summary)


def cmd_priority(args) -> None:
    feats = _load_matrix(args)
    ladder = GranularityLadder.parse(args.ladder)
    for v in ladder.values:
        DbscanParams(v, args.min_pts)
    out = _out_dir(args, "priority")
    _claim(out, args.force, ["priority.csv"])
    prio, labelings = build_priority(feats, ladder, args.min_pts)
    (out / "priority.csv").write_text(prio.to_csv())
    _emit({"n": prio.n, "t": prio.t, "radii": list(ladder.values),
           "clusters_per_granularity": [lb.num_clusters for lb in labelings],
           "nonzero_pairs": int((prio.counts.nnz - prio.n) // 2)})


def cmd_train(args) -> None:
    cfg = _run_config(args)
    out = _out_dir(args, "train")
    _claim(out, args.force, ["encoder.bin", "memory.feat", "train_log.jsonl", "metrics.json"])
    outcome = run(cfg)
    write_run(outcome, out)
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n")
    _emit(outcome.metrics())


def cmd_evaluate(args) -> None:
    cfg = _run_config(args)
    ds = dataset_from_config(cfg)
    if args.checkpoint:
        enc = Encoder.from_bytes(Path(args.checkpoint).read_bytes())
        emb = enc.forward(ds.features)
    else:
        emb = l2_normalize(ds.features)
    result = to_json_dict(evaluate(ds.eval_set(emb)))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n")
    _emit(result)


def cmd_sweep(args) -> None:
    cfg = _run_config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    values = args.values.split(",") if args.values else None
    rows = sweep(cfg, args.axis, values, seeds, args.jobs)
    text = sweep_csv(rows)
    if args.out:
        path = Path(args.out)
        if path.exists() and not args.force:
            raise ConfigInvalid(f"{path} exists; pass --force to overwrite")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    sys.stdout.write(text)


def build_parser() -> Parser:
    parser = Parser(prog="hybridcl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hybridcl {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset (FEATv1 + split manifest)")
    p.add_argument("--preset", choices=["easy", "medium", "hard"], default="easy")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("cluster", help="DBSCAN on L2-normalized features")
    p.add_argument("--data")
    p.add_argument("--features")
    p.add_argument("--d", type=float, required=True, help="cosine-distance radius")
    p.add_argument("--min-pts", type=int, default=4)
    p.add_argument("--calibrate", action="store_true", help="also report the eps scale")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("priority", help="priority matrix over a granularity ladder")
    p.add_argument("--data")
    p.add_argument("--features")
    p.add_argument("--ladder", required=True, help="lo:hi:delta in cosine-distance units")
    p.add_argument("--min-pts", type=int, default=4)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_priority)

    p = sub.add_parser("train", help="train the encoder and evaluate it")
    _common_run_args(p)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="mAP / CMC of a checkpoint (or raw features)")
    _common_run_args(p)
    p.add_argument("--checkpoint", help="encoder.bin written by `train`")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="ablation sweep, one CSV row per setting")
    _common_run_args(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", help="comma-separated settings (default: the standard grid)")
    p.add_argument("--seeds", help="comma-separated seeds; rows report mean and sample std")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("missing command; choose from generate, cluster, priority, train, evaluate, sweep")
        args.func(args)
    except UsageError as exc:
        print(f"usage_error: {exc}", file=sys.stderr)
        return 2
    except HybridCLError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigInvalid) else 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"io_error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
