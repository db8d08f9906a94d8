"""Deterministic DBSCAN over cosine distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigInvalid
from .numcore import as_matrix, l2_normalize

DEFAULT_MIN_PTS = 4
NOISE = -1


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = DEFAULT_MIN_PTS

    def __post_init__(self):
        if not (0.0 < self.eps < 2.0):
            raise ConfigInvalid(f"eps must lie in (0, 2), got {self.eps}")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ConfigInvalid(f"min_pts must be a positive integer, got {self.min_pts}")


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray
    num_clusters: int

    @classmethod
    def from_labels(cls, labels) -> "ClusterLabeling":
        lab = canonicalize(labels)
        return cls(lab, int(lab.max()) + 1 if lab.size and lab.max() >= 0 else 0)

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def noise_fraction(self) -> float:
        return float(np.mean(self.labels == NOISE)) if self.n else 0.0

    def members(self) -> list[np.ndarray]:
        """Sorted sample ids of every cluster, indexed by cluster id."""
        order = np.argsort(self.labels, kind="stable")
        lab = self.labels[order]
        bounds = np.searchsorted(lab, np.arange(self.num_clusters + 1))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.num_clusters)]

    def to_csv(self) -> str:
        return "".join(f"{int(v)}\n" for v in self.labels)

    @classmethod
    def from_csv(cls, text: str) -> "ClusterLabeling":
        vals = [int(line) for line in text.split() if line.strip()]
        return cls.from_labels(np.array(vals, dtype=np.int64))


def canonicalize(labels) -> np.ndarray:
    """Renumber clusters by first occurrence in the label array; -1 stays."""
    lab = np.asarray(labels, dtype=np.int64).ravel()
    out = np.full(lab.size, NOISE, dtype=np.int64)
    mask = lab != NOISE
    if not mask.any():
        return out
    _, first, inverse = np.unique(lab[mask], return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    out[mask] = rank[inverse.ravel()]
    return out


def cosine_distance_matrix(features) -> np.ndarray:
    f = as_matrix(features)
    sim = f @ f.T
    dist = 1.0 - 0.5 * (sim + sim.T)
    np.clip(dist, 0.0, 2.0, out=dist)
    np.fill_diagonal(dist, 0.0)
    return dist


def _assign(dist, params: DbscanParams, anchor=None):
    """Labels (raw seed ids) plus, for clustered border points, the core they attach to."""
    n = dist.shape[0]
    adj = dist <= params.eps
    core = adj.sum(axis=1) >= params.min_pts
    labels = np.full(n, NOISE, dtype=np.int64)
    attach = np.full(n, -1, dtype=np.int64)
    core_idx = np.flatnonzero(core)
    if core_idx.size == 0:
        return labels, attach

    core_adj = csr_matrix(adj[np.ix_(core_idx, core_idx)])
    _, comp = connected_components(core_adj, directed=False)
    # seed = smallest core index in each component
    seed = np.full(comp.max() + 1, n, dtype=np.int64)
    np.minimum.at(seed, comp, core_idx)
    labels[core_idx] = seed[comp]

    border = np.flatnonzero(~core)
    if border.size:
        touch = adj[np.ix_(border, core_idx)]
        cand = np.where(touch, seed[comp][None, :], n)
        best = cand.min(axis=1)
        hit = best < n
        # first adjacent core belonging to the chosen cluster
        pick = np.argmax(cand == best[:, None], axis=1)
        attach[border[hit]] = core_idx[pick[hit]]
        if anchor is not None:
            keep = (anchor[border] >= 0) & hit
            attach[border[keep]] = anchor[border[keep]]
        labels[border[hit]] = labels[attach[border[hit]]]
    return labels, attach


def dbscan_from_distances(dist: np.ndarray, params: DbscanParams) -> ClusterLabeling:
    """DBSCAN on a precomputed symmetric distance matrix.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Core points connected through ``eps`` edges form one
    cluster. A border point joins the neighbouring cluster whose smallest core
    index is lowest, which is the cluster classic DBSCAN reaches first when it
    scans samples in ascending order.
    """
    labels, _ = _assign(dist, params)
    return ClusterLabeling.from_labels(labels)


def dbscan_ladder(dist: np.ndarray, radii, min_pts: int) -> list[ClusterLabeling]:
    """DBSCAN at ascending radii with border assignments carried up the ladder.

    The first radius is plain :func:`dbscan_from_distances`. At each larger
    radius a border point that was already clustered stays with the core it
    attached to before (that core is still core and still adjacent), so any
    pair grouped at one radius stays grouped at every larger one.
    """
    radii = [float(r) for r in radii]
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ConfigInvalid("ladder radii must be ascending")
    out = []
    anchor = None
    for r in radii:
        labels, anchor = _assign(dist, DbscanParams(r, min_pts), anchor)
        out.append(ClusterLabeling.from_labels(labels))
    return out


def dbscan(features, params: DbscanParams) -> ClusterLabeling:
    return dbscan_from_distances(cosine_distance_matrix(l2_normalize(features)), params)
