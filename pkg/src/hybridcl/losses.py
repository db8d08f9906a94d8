"""Contrastive objectives with analytic gradients w.r.t. unit-norm batch features.

Three losses share one kernel. For anchor ``i`` with positive prototype ``P_i``
and a set of negative reference rows ``R_k`` the per-anchor term is

    -log( e^{<f_i,P_i>/tau} / (e^{<f_i,P_i>/tau} + sum_k e^{<f_i,R_k>/tau}) )

and the three losses differ only in how ``P_i`` and the negatives are chosen:

* ``cluster_nce_loss``: ``P_i`` is the anchor's cluster centroid, negatives are
  the other centroids.
* ``hcl_loss``: ``P_i`` is the anchor's cluster centroid, negatives are all
  memory rows outside the anchor's cluster (noise rows included).
* ``pc_loss``: ``P_i`` is the priority-weighted mean of memory rows, negatives
  are memory rows with zero priority.

Centroids are plain arithmetic means (never renormalized); with a single
labeling this makes ``pc_loss`` and ``hcl_loss`` coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import NOISE, ClusterLabeling
from .ensemble import PriorityMatrix
from .errors import AllAnchorsIsolated, AllAnchorsNoise, ConfigInvalid, DimMismatch, NoClusters
from .numcore import as_matrix, rows_log_sum_exp

DEFAULT_TAU = 0.05


@dataclass(frozen=True)
class LossConfig:
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigInvalid(f"tau must be positive, got {self.tau}")


@dataclass
class Batch:
    indices: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).ravel()
        self.features = as_matrix(self.features)
        if self.indices.size != self.features.shape[0] or self.indices.size == 0:
            raise DimMismatch(
                f"{self.indices.size} indices vs {self.features.shape[0]} feature rows"
            )


@dataclass
class ClusterCentroids:
    means: np.ndarray
    counts: np.ndarray
    members: list = field(repr=False)


@dataclass
class AnchorStat:
    s_plus: float
    s_minus: float
    included: bool


@dataclass
class LossReport:
    value: float
    grad: np.ndarray
    per_anchor: list

    @property
    def num_included(self) -> int:
        return sum(a.included for a in self.per_anchor)


def centroids(memory_snapshot, labeling: ClusterLabeling) -> ClusterCentroids:
    mem = as_matrix(memory_snapshot)
    if labeling.num_clusters == 0:
        raise NoClusters("labeling has no clusters")
    if labeling.n != mem.shape[0]:
        raise DimMismatch(f"labeling covers {labeling.n} samples, memory has {mem.shape[0]}")
    members = labeling.members()
    means = np.stack([mem[m].sum(axis=0) / m.size for m in members])
    counts = np.array([m.size for m in members], dtype=np.int64)
    return ClusterCentroids(means, counts, members)


def _contrast(f, pos, ref, neg_mask, included, tau):
    """Shared kernel. Returns (value, grad, s_plus, s_minus)."""
    b = f.shape[0]
    pos_logit = np.einsum("ij,ij->i", f, pos) / tau
    ref_logit = (f @ ref.T) / tau
    # shift every logit by its anchor's positive so the positive column is exactly 0
    x = np.where(neg_mask, ref_logit - pos_logit[:, None], -np.inf)
    x = np.concatenate([np.zeros((b, 1)), x], axis=1)
    term = rows_log_sum_exp(x)
    w = np.exp(x - term[:, None])
    w_neg = w[:, 1:]
    grad = (w_neg @ ref - w_neg.sum(axis=1)[:, None] * pos) / tau

    k = int(included.sum())
    grad[~included] = 0.0
    grad /= max(k, 1)
    value = float(term[included].sum() / k) if k else 0.0

    s_plus = np.exp(pos_logit)
    s_minus = np.where(neg_mask, np.exp(ref_logit), 0.0).sum(axis=1)
    return value, grad, s_plus, s_minus


def _report(value, grad, s_plus, s_minus, included):
    stats = [
        AnchorStat(float(sp), float(sm), bool(inc))
        for sp, sm, inc in zip(s_plus, s_minus, included)
    ]
    return LossReport(value, grad, stats)


def _anchor_labels(batch: Batch, labeling: ClusterLabeling) -> np.ndarray:
    if batch.indices.min() < 0 or batch.indices.max() >= labeling.n:
        raise DimMismatch("batch ids fall outside the labeling")
    return labeling.labels[batch.indices]


def cluster_nce_loss(batch: Batch, cents: ClusterCentroids, labeling: ClusterLabeling,
                     cfg: LossConfig = LossConfig()) -> LossReport:
    lab = _anchor_labels(batch, labeling)
    included = lab != NOISE
    if not included.any():
        raise AllAnchorsNoise("every anchor in the batch is noise")
    safe = np.where(included, lab, 0)
    pos = cents.means[safe]
    neg_mask = np.arange(cents.means.shape[0])[None, :] != safe[:, None]
    value, grad, sp, sm = _contrast(batch.features, pos, cents.means, neg_mask, included, cfg.tau)
    sp = np.where(included, sp, np.nan)
    sm = np.where(included, sm, np.nan)
    return _report(value, grad, sp, sm, included)


def hcl_loss(batch: Batch, memory_snapshot, labeling: ClusterLabeling,
             cents: ClusterCentroids, cfg: LossConfig = LossConfig()) -> LossReport:
    mem = as_matrix(memory_snapshot)
    lab = _anchor_labels(batch, labeling)
    included = lab != NOISE
    if not included.any():
        raise AllAnchorsNoise("every anchor in the batch is noise")
    safe = np.where(included, lab, 0)
    pos = cents.means[safe]
    neg_mask = labeling.labels[None, :] != safe[:, None]
    value, grad, sp, sm = _contrast(batch.features, pos, mem, neg_mask, included, cfg.tau)
    sp = np.where(included, sp, np.nan)
    sm = np.where(included, sm, np.nan)
    return _report(value, grad, sp, sm, included)


def pc_loss(batch: Batch, memory_snapshot, prio: PriorityMatrix,
            cfg: LossConfig = LossConfig()) -> LossReport:
    mem = as_matrix(memory_snapshot)
    if prio.n != mem.shape[0]:
        raise DimMismatch(f"priority covers {prio.n} samples, memory has {mem.shape[0]}")
    if batch.indices.min() < 0 or batch.indices.max() >= prio.n:
        raise DimMismatch("batch ids fall outside the priority matrix")
    p = prio.dense_rows(batch.indices)
    neg_mask = p == 0.0
    included = (~neg_mask).sum(axis=1) > 1
    if not included.any():
        raise AllAnchorsIsolated("no anchor has an off-diagonal positive")
    pos = (p @ mem) / p.sum(axis=1)[:, None]
    value, grad, sp, sm = _contrast(batch.features, pos, mem, neg_mask, included, cfg.tau)
    return _report(value, grad, sp, sm, included)


def grad_check(loss_fn, features, eps_fd: float = 1e-5) -> float:
    """Max relative error between the analytic gradient and central differences.

    ``loss_fn`` maps a batch-feature matrix to a :class:`LossReport`. Only
    coordinates with ``|analytic| > 1e-8`` are compared.
    """
    if not 1e-7 <= eps_fd <= 1e-3:
        raise ConfigInvalid(f"eps_fd must lie in [1e-7, 1e-3], got {eps_fd}")
    f = as_matrix(features).copy()
    analytic = loss_fn(f).grad
    worst = 0.0
    for idx in np.ndindex(f.shape):
        a = analytic[idx]
        if abs(a) <= 1e-8:
            continue
        orig = f[idx]
        f[idx] = orig + eps_fd
        up = loss_fn(f).value
        f[idx] = orig - eps_fd
        down = loss_fn(f).value
        f[idx] = orig
        num = (up - down) / (2 * eps_fd)
        worst = max(worst, abs(a - num) / max(abs(a), abs(num)))
    return worst
