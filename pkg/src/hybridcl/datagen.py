"""Synthetic identity-structured features and the FEATv1 feature-file format."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, FormatError
from .evaluation import EvalSet
from .numcore import make_rng

MAGIC = b"FEATv1"
HEADER = struct.Struct("<6sIIBB")


@dataclass(frozen=True)
class SynthConfig:
    num_ids: int = 50
    samples_per_id: int = 8
    dim: int = 32
    num_cams: int = 4
    intra_sigma: float = 0.05
    cam_sigma: float = 0.02
    seed: int = 7

    def validate(self) -> None:
        if self.num_ids < 1 or self.dim < 1:
            raise ConfigInvalid("num_ids and dim must be positive")
        if self.samples_per_id < 2:
            raise ConfigInvalid("samples_per_id must be at least 2")
        if self.num_cams < 2:
            raise ConfigInvalid("num_cams must be at least 2")
        if self.samples_per_id < self.num_cams + 1:
            # one query per camera plus at least one cross-camera gallery match
            raise ConfigInvalid("samples_per_id must exceed num_cams")
        if self.intra_sigma < 0 or self.cam_sigma < 0:
            raise ConfigInvalid("noise scales must be non-negative")


PRESETS = {
    "easy": SynthConfig(50, 8, 32, 4, 0.05, 0.02),
    "medium": SynthConfig(100, 8, 32, 4, 0.12, 0.06),
    "hard": SynthConfig(100, 8, 32, 4, 0.2, 0.1),
}


def preset(name: str, **overrides) -> SynthConfig:
    if name not in PRESETS:
        raise ConfigInvalid(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


@dataclass
class LabeledDataset:
    features: np.ndarray
    true_ids: np.ndarray
    cams: np.ndarray
    query: np.ndarray
    gallery: np.ndarray

    def eval_set(self, embedded: np.ndarray) -> EvalSet:
        return EvalSet(
            embedded[self.query], embedded[self.gallery],
            self.true_ids[self.query], self.true_ids[self.gallery],
            self.cams[self.query], self.cams[self.gallery],
        )


def _unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate(cfg: SynthConfig) -> LabeledDataset:
    """Samples are ``center + camera offset + N(0, intra_sigma^2 I)``, identity-major order."""
    cfg.validate()
    rng = make_rng(cfg.seed)
    centers = _unit_rows(rng, cfg.num_ids, cfg.dim)
    cam_offsets = cfg.cam_sigma * _unit_rows(rng, cfg.num_cams, cfg.dim)
    n = cfg.num_ids * cfg.samples_per_id
    ids = np.repeat(np.arange(cfg.num_ids), cfg.samples_per_id)
    cams = np.tile(np.arange(cfg.samples_per_id) % cfg.num_cams, cfg.num_ids)
    noise = rng.normal(0.0, 1.0, size=(n, cfg.dim)) * cfg.intra_sigma
    features = centers[ids] + cam_offsets[cams] + noise
    # first sample of every (identity, camera) is the query
    is_query = np.tile(np.arange(cfg.samples_per_id) < cfg.num_cams, cfg.num_ids)
    return LabeledDataset(
        features, ids.astype(np.int64), cams.astype(np.int64),
        np.flatnonzero(is_query), np.flatnonzero(~is_query),
    )


def encode_features(features, ids=None, cams=None) -> bytes:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ConfigInvalid("features must be a 2-D matrix")
    n, d = f.shape
    parts = [HEADER.pack(MAGIC, n, d, ids is not None, cams is not None)]
    parts.append(np.ascontiguousarray(f, dtype="<f8").tobytes())
    for arr in (ids, cams):
        if arr is not None:
            a = np.asarray(arr).ravel()
            if a.size != n:
                raise ConfigInvalid(f"label array of length {a.size} for {n} rows")
            parts.append(a.astype("<i4").tobytes())
    return b"".join(parts)


def decode_features(blob: bytes):
    """Inverse of :func:`encode_features`; returns ``(features, ids, cams)``."""
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic, expected {MAGIC.decode()!r}", 0)
    if len(blob) < HEADER.size:
        raise FormatError("truncated header", len(blob))
    _, n, d, has_ids, has_cams = HEADER.unpack_from(blob, 0)
    if has_ids > 1 or has_cams > 1:
        raise FormatError("label flags must be 0 or 1", HEADER.size - 2)
    off = HEADER.size
    need = off + 8 * n * d + 4 * n * (has_ids + has_cams)
    if len(blob) < need:
        raise FormatError(f"truncated payload, need {need} bytes", len(blob))
    if len(blob) > need:
        raise FormatError("trailing bytes after payload", need)
    feats = np.frombuffer(blob, "<f8", n * d, off).reshape(n, d).astype(np.float64)
    off += 8 * n * d
    out = [feats]
    for flag in (has_ids, has_cams):
        if flag:
            out.append(np.frombuffer(blob, "<i4", n, off).astype(np.int64))
            off += 4 * n
        else:
            out.append(None)
    return tuple(out)


def write_features(path, features, ids=None, cams=None) -> None:
    Path(path).write_bytes(encode_features(features, ids, cams))


def read_features(path):
    """Read FEATv1, or CSV (``id,cam,f0,...``) when the file does not start with the magic."""
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC and Path(path).suffix.lower() == ".csv":
        return read_csv_features(blob.decode())
    return decode_features(blob)


def read_csv_features(text: str):
    lines = text.splitlines(keepends=True)
    header = lines[0].strip().split(",") if lines else []
    if header[:2] != ["id", "cam"]:
        raise FormatError("CSV header must start with id,cam", 0)
    d = len(header) - 2
    ids, cams, feats = [], [], []
    offset = len(lines[0].encode())
    for line in lines[1:]:
        row = next(csv.reader([line]), [])
        if row:
            if len(row) != d + 2:
                raise FormatError(f"row has {len(row)} fields, expected {d + 2}", offset)
            try:
                ids.append(int(row[0]))
                cams.append(int(row[1]))
                feats.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise FormatError(f"unparsable value ({exc})", offset) from None
        offset += len(line.encode())
    return (np.array(feats, dtype=np.float64).reshape(len(feats), d),
            np.array(ids, dtype=np.int64), np.array(cams, dtype=np.int64))


def split_from_labels(ids, cams) -> tuple[np.ndarray, np.ndarray]:
    """Query = first sample of every (identity, camera) pair; the rest is gallery."""
    ids = np.asarray(ids).ravel()
    cams = np.asarray(cams).ravel()
    seen = set()
    is_query = np.zeros(ids.size, dtype=bool)
    for i, key in enumerate(zip(ids.tolist(), cams.tolist())):
        if key[0] >= 0 and key not in seen:
            seen.add(key)
            is_query[i] = True
    return np.flatnonzero(is_query), np.flatnonzero(~is_query)


def save_dataset(directory, ds: LabeledDataset, meta: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_features(directory / "features.feat", ds.features, ds.true_ids, ds.cams)
    manifest = {"query": ds.query.tolist(), "gallery": ds.gallery.tolist()}
    if meta:
        manifest["meta"] = meta
    (directory / "split.json").write_text(json.dumps(manifest, indent=1) + "\n")


def load_dataset(features_path, split_path=None) -> LabeledDataset:
    """Load a feature file; without a split manifest one is derived from ids and cameras."""
    feats, ids, cams = read_features(features_path)
    if ids is None or cams is None:
        raise FormatError("feature file needs identity and camera labels for evaluation", 0)
    if split_path is not None and Path(split_path).exists():
        manifest = json.loads(Path(split_path).read_text())
        query = np.asarray(manifest["query"], dtype=np.int64)
        gallery = np.asarray(manifest["gallery"], dtype=np.int64)
    else:
        query, gallery = split_from_labels(ids, cams)
    return LabeledDataset(feats, ids, cams, query, gallery)
