"""Multi-granularity cluster ensemble: per-granularity affinities averaged into priorities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .clustering import NOISE, ClusterLabeling, cosine_distance_matrix, dbscan_ladder
from .errors import ConfigInvalid, LengthMismatch

LADDER_TOL = 1e-9


@dataclass(frozen=True)
class GranularityLadder:
    d_lo: float = 0.4
    d_hi: float = 0.6
    delta: float = 0.05
    values: tuple = field(init=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigInvalid(f"ladder delta must be positive, got {self.delta}")
        if self.d_lo > self.d_hi:
            raise ConfigInvalid(f"ladder low {self.d_lo} exceeds high {self.d_hi}")
        steps = int(math.floor((self.d_hi - self.d_lo) / self.delta + LADDER_TOL))
        vals = tuple(round(self.d_lo + k * self.delta, 12) for k in range(steps + 1))
        object.__setattr__(self, "values", vals)

    @property
    def t(self) -> int:
        return len(self.values)

    @classmethod
    def single(cls, d: float) -> "GranularityLadder":
        return cls(d, d, 1.0)

    @classmethod
    def parse(cls, text: str) -> "GranularityLadder":
        """Parse ``lo:hi:delta`` (or a bare ``d`` for a one-step ladder)."""
        parts = str(text).split(":")
        try:
            if len(parts) == 1:
                return cls.single(float(parts[0]))
            if len(parts) == 3:
                return cls(float(parts[0]), float(parts[1]), float(parts[2]))
        except ValueError:
            pass
        raise ConfigInvalid(f"ladder must look like lo:hi:delta, got {text!r}")

    def __str__(self) -> str:
        return f"{self.d_lo:g}:{self.d_hi:g}:{self.delta:g}"


class AffinityMatrix:
    """Binary symmetric co-cluster matrix in CSR form (rows hold sorted column ids)."""

    def __init__(self, csr: sparse.csr_matrix):
        self.csr = csr

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()


class PriorityMatrix:
    """Sparse symmetric matrix of co-cluster fractions ``k / t``.

    Integer counts are kept so that every value is exactly ``k / t``; entries
    missing from the sparse structure are exactly zero.
    """

    def __init__(self, counts: sparse.csr_matrix, t: int):
        counts = sparse.csr_matrix(counts, dtype=np.int64)
        counts.eliminate_zeros()
        counts.sort_indices()
        self.counts = counts
        self.t = int(t)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(sorted column ids, weights) of the non-zero entries of row ``i``."""
        lo, hi = self.counts.indptr[i], self.counts.indptr[i + 1]
        return self.counts.indices[lo:hi], self.counts.data[lo:hi] / self.t

    def dense_rows(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        return self.counts[rows].toarray() / self.t

    def toarray(self) -> np.ndarray:
        return self.counts.toarray() / self.t

    @classmethod
    def from_triples(cls, n: int, t: int, rows, cols, counts) -> "PriorityMatrix":
        """Build from upper-triangle (i, j, k) triples; the diagonal is implied."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        diag = np.arange(n)
        r = np.concatenate([rows, cols, diag])
        c = np.concatenate([cols, rows, diag])
        k = np.concatenate([counts, counts, np.full(n, t, dtype=np.int64)])
        return cls(sparse.csr_matrix((k, (r, c)), shape=(n, n)), t)

    def to_csv(self) -> str:
        upper = sparse.triu(self.counts, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        lines = [f"{self.n},{self.t}\n"]
        for i, j, k in zip(upper.row[order], upper.col[order], upper.data[order]):
            lines.append(f"{i},{j},{float(k / self.t)!r}\n")
        return "".join(lines)

    @classmethod
    def from_csv(cls, text: str) -> "PriorityMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        n, t = (int(v) for v in lines[0].split(","))
        rows, cols, ks = [], [], []
        for ln in lines[1:]:
            i, j, p = ln.split(",")
            rows.append(int(i))
            cols.append(int(j))
            ks.append(int(round(float(p) * t)))
        return cls.from_triples(n, t, rows, cols, ks)


def _membership(labeling: ClusterLabeling) -> sparse.csr_matrix:
    lab = labeling.labels
    clustered = np.flatnonzero(lab != NOISE)
    return sparse.csr_matrix(
        (np.ones(clustered.size, dtype=np.int64), (clustered, lab[clustered])),
        shape=(lab.size, max(labeling.num_clusters, 1)),
    )


def _affinity_counts(labeling: ClusterLabeling) -> sparse.csr_matrix:
    onehot = _membership(labeling)
    a = (onehot @ onehot.T).tocsr()
    # noise points match only themselves
    noise = (labeling.labels == NOISE).astype(np.int64)
    a = a + sparse.diags(noise, format="csr", dtype=np.int64)
    a.sort_indices()
    return a


def affinity(labeling: ClusterLabeling) -> AffinityMatrix:
    return AffinityMatrix(_affinity_counts(labeling))


def priority(labelings, t: int | None = None) -> PriorityMatrix:
    labelings = list(labelings)
    if t is None:
        t = len(labelings)
    if len(labelings) != t or t < 1:
        raise LengthMismatch(f"expected {t} labelings, got {len(labelings)}")
    n = labelings[0].n
    if any(lb.n != n for lb in labelings):
        raise LengthMismatch("labelings cover different sample counts")
    total = _affinity_counts(labelings[0])
    for lb in labelings[1:]:
        total = total + _affinity_counts(lb)
    return PriorityMatrix(total, t)


def cluster_ladder(features, ladder: GranularityLadder, min_pts: int) -> list[ClusterLabeling]:
    """One DBSCAN labeling per ladder value, sharing a single distance matrix."""
    return dbscan_ladder(cosine_distance_matrix(features), ladder.values, min_pts)


def build_priority(features, ladder: GranularityLadder, min_pts: int):
    """Return ``(PriorityMatrix, labelings)`` for the given ladder."""
    labelings = cluster_ladder(features, ladder, min_pts)
    return priority(labelings, ladder.t), labelings
