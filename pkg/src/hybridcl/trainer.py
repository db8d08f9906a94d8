"""PK sampling and the recluster / train / update-memory epoch loop."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .clustering import (
    DEFAULT_MIN_PTS,
    ClusterLabeling,
    DbscanParams,
    cosine_distance_matrix,
    dbscan_from_distances,
    dbscan_ladder,
)
from .encoder import Adam, AdamConfig, Encoder, EncoderConfig
from .ensemble import GranularityLadder, priority
from .errors import ConfigInvalid, DegenerateClustering, NoClusters
from .losses import Batch, LossConfig, centroids, cluster_nce_loss, hcl_loss, pc_loss
from .memory import DEFAULT_GAMMA, MemoryBank
from .numcore import make_rng, split_seed

LOSS_KINDS = ("cluster_nce", "hcl", "pc")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    p_identities: int = 16
    k_instances: int = 4
    iters_per_epoch: int | None = None  # None = ceil(clustered / (P*K))
    loss_kind: str = "pc"
    ladder: GranularityLadder = field(default_factory=GranularityLadder)
    d: float = 0.5
    min_pts: int = DEFAULT_MIN_PTS
    tau: float = 0.05
    gamma: float = DEFAULT_GAMMA
    jitter_sigma: float = 0.05
    seed: int = 0
    eps_scale: float | str = "auto"
    refresh_stale: bool = True
    record_timing: bool = False

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigInvalid(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.epochs < 0:
            raise ConfigInvalid("epochs must be non-negative")
        if self.p_identities < 1 or self.k_instances < 1 or self.p_identities * self.k_instances < 2:
            raise ConfigInvalid("need P >= 1, K >= 1 and P*K >= 2")
        if self.iters_per_epoch is not None and self.iters_per_epoch < 1:
            raise ConfigInvalid("iters_per_epoch must be positive or None")
        if self.jitter_sigma < 0:
            raise ConfigInvalid("jitter_sigma must be non-negative")
        if self.eps_scale != "auto" and not (isinstance(self.eps_scale, (int, float)) and self.eps_scale > 0):
            raise ConfigInvalid(f"eps_scale must be 'auto' or a positive number, got {self.eps_scale!r}")
        scale = 1.0 if self.eps_scale == "auto" else float(self.eps_scale)
        for v in self.granularities:
            if not 0 < v * scale:
                raise ConfigInvalid(f"neighbourhood radius {v} must be positive")
            if self.eps_scale != "auto":
                DbscanParams(v * scale, self.min_pts)

    @property
    def granularities(self) -> tuple:
        """Neighbourhood radii in nominal (unscaled) units."""
        return self.ladder.values if self.loss_kind == "pc" else (self.d,)

    def radii(self, scale: float) -> tuple:
        return tuple(round(v * scale, 12) for v in self.granularities)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    clusters_per_granularity: list
    noise_fraction: float
    wall_ms: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)


@dataclass
class TrainResult:
    encoder: Encoder
    memory: MemoryBank
    scale: float = 1.0
    radii: tuple = ()
    log: list = field(default_factory=list)

    def log_jsonl(self) -> str:
        return "".join(rec.to_json() + "\n" for rec in self.log)


def pk_sample(labeling: ClusterLabeling, p: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``min(p, C)`` clusters, then ``k`` members from each.

    Clusters smaller than ``k`` are sampled with replacement, so the batch may
    repeat ids; noise samples are never drawn.
    """
    members = labeling.members()
    if not members:
        raise NoClusters("cannot sample a batch without clusters")
    chosen = rng.choice(len(members), size=min(p, len(members)), replace=False)
    out = []
    for c in chosen:
        m = members[c]
        out.append(rng.choice(m, size=k, replace=m.size < k))
    return np.concatenate(out).astype(np.int64)


def first_occurrences(ids: np.ndarray) -> np.ndarray:
    """Positions of the first occurrence of every distinct id, in batch order."""
    _, first = np.unique(ids, return_index=True)
    return np.sort(first)


CALIBRATION_GRID = tuple(round(0.005 * k, 3) for k in range(1, 200))
NOMINAL_MIDPOINT = 0.5


def calibrate_scale(features, min_pts: int = DEFAULT_MIN_PTS, grid=CALIBRATION_GRID) -> float:
    """Factor mapping nominal radii onto the cosine geometry of ``features``.

    Finds the radius at which DBSCAN yields the most clusters (smallest radius
    on ties) and maps the nominal midpoint 0.5 onto it, so a nominal ladder
    0.4..0.6 brackets the peak: its low end leaves many points as noise and
    its high end starts merging clusters.
    """
    dist = cosine_distance_matrix(features)
    counts = [dbscan_from_distances(dist, DbscanParams(e, min_pts)).num_clusters for e in grid]
    best = int(np.argmax(counts))
    if counts[best] == 0:
        raise DegenerateClustering("no radius in the calibration grid produces a cluster")
    return grid[best] / NOMINAL_MIDPOINT


def _cluster_epoch(snap, radii, min_pts):
    return dbscan_ladder(cosine_distance_matrix(snap), radii, min_pts)


def _batch_loss(cfg: TrainConfig, batch: Batch, snap, labeling, prio, loss_cfg):
    if cfg.loss_kind == "pc":
        return pc_loss(batch, snap, prio, loss_cfg)
    cents = centroids(snap, labeling)
    if cfg.loss_kind == "hcl":
        return hcl_loss(batch, snap, labeling, cents, loss_cfg)
    return cluster_nce_loss(batch, cents, labeling, loss_cfg)


def initial_encoder(enc_cfg: EncoderConfig, seed: int) -> Encoder:
    """The untrained encoder that :func:`train` starts from for this seed."""
    return Encoder(enc_cfg, make_rng(split_seed(seed, 3)[0]))


def train(raw_features, enc_cfg: EncoderConfig, adam_cfg: AdamConfig, cfg: TrainConfig,
          on_epoch=None) -> TrainResult:
    """Run the full training loop.

    Each epoch clusters a snapshot of the memory bank (once per granularity),
    then iterates PK batches: forward with jitter, loss against the current
    memory, backward, Adam step, memory update on the distinct batch ids.
    For the priority loss the batches are drawn from the coarsest labeling.
    """
    raw = np.asarray(raw_features, dtype=np.float64)
    init_seed, sample_seed, jitter_seed = split_seed(cfg.seed, 3)
    encoder = Encoder(enc_cfg, make_rng(init_seed))
    sample_rng = make_rng(sample_seed)
    jitter_rng = make_rng(jitter_seed)
    optim = Adam(adam_cfg)
    loss_cfg = LossConfig(cfg.tau)
    memory = MemoryBank(encoder.forward(raw), cfg.gamma)
    if cfg.eps_scale == "auto":
        scale = calibrate_scale(memory.snapshot(), cfg.min_pts)
    else:
        scale = float(cfg.eps_scale)
    radii = cfg.radii(scale)
    for r in radii:
        DbscanParams(r, cfg.min_pts)
    result = TrainResult(encoder, memory, scale=scale, radii=radii)
    touched = np.ones(len(raw), dtype=bool)

    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        if epoch > 0 and cfg.refresh_stale and not touched.all():
            stale = np.flatnonzero(~touched)
            memory.refresh(stale, encoder.forward(raw[stale]))
        touched = np.zeros(len(raw), dtype=bool)
        labelings = _cluster_epoch(memory.snapshot(), radii, cfg.min_pts)
        counts = [lb.num_clusters for lb in labelings]
        if max(counts) == 0:
            raise DegenerateClustering(f"epoch {epoch}: no granularity produced a cluster")
        sampling = labelings[-1]
        prio = priority(labelings) if cfg.loss_kind == "pc" else None
        if cfg.loss_kind != "pc" and sampling.num_clusters == 0:
            raise DegenerateClustering(f"epoch {epoch}: radius {radii[0]} produced no cluster")
        clustered = int(np.sum(sampling.labels >= 0))
        iters = cfg.iters_per_epoch or math.ceil(clustered / (cfg.p_identities * cfg.k_instances))

        losses = []
        for _ in range(iters):
            ids = pk_sample(sampling, cfg.p_identities, cfg.k_instances, sample_rng)
            feats = encoder.forward(raw[ids], cfg.jitter_sigma, jitter_rng)
            report = _batch_loss(cfg, Batch(ids, feats), memory.snapshot(), sampling, prio, loss_cfg)
            losses.append(report.value)
            grads = encoder.backward(report.grad)
            optim.step(encoder.params, grads)
            keep = first_occurrences(ids)
            memory.update(ids[keep], feats[keep])
            touched[ids] = True

        wall = (time.perf_counter() - start) * 1000.0 if cfg.record_timing else None
        rec = EpochRecord(epoch, float(np.mean(losses)), counts, sampling.noise_fraction, wall)
        result.log.append(rec)
        if on_epoch is not None:
            on_epoch(rec, result)
    return result


def embed(encoder: Encoder, raw) -> np.ndarray:
    return encoder.forward(raw)
