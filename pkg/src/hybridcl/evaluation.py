"""Retrieval metrics: mAP and CMC under the cross-camera protocol."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimMismatch, NoRelevant, NoValidQueries
from .numcore import as_matrix

CMC_TOPK = (1, 5, 10)
JUNK_ID = -1


@dataclass
class EvalSet:
    query_features: np.ndarray
    gallery_features: np.ndarray
    query_ids: np.ndarray
    gallery_ids: np.ndarray
    query_cams: np.ndarray
    gallery_cams: np.ndarray

    def __post_init__(self):
        self.query_features = as_matrix(self.query_features)
        self.gallery_features = as_matrix(self.gallery_features)
        for name in ("query_ids", "gallery_ids", "query_cams", "gallery_cams"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64).ravel())
        if self.query_features.shape[1] != self.gallery_features.shape[1]:
            raise DimMismatch("query and gallery feature dims differ")
        if not (len(self.query_ids) == len(self.query_cams) == len(self.query_features)):
            raise DimMismatch("query arrays are not aligned")
        if not (len(self.gallery_ids) == len(self.gallery_cams) == len(self.gallery_features)):
            raise DimMismatch("gallery arrays are not aligned")


def _rank(sim_row, q_id, q_cam, evalset: EvalSet) -> np.ndarray:
    keep = ~((evalset.gallery_ids == q_id) & (evalset.gallery_cams == q_cam))
    keep &= evalset.gallery_ids != JUNK_ID
    idx = np.flatnonzero(keep)
    order = np.lexsort((idx, -sim_row[idx]))
    return idx[order]


def rank_gallery(q_index: int, evalset: EvalSet) -> np.ndarray:
    """Gallery indices by descending cosine similarity, ties by ascending index."""
    sim = evalset.gallery_features @ evalset.query_features[q_index]
    return _rank(sim, evalset.query_ids[q_index], evalset.query_cams[q_index], evalset)


def average_precision(relevant) -> float:
    rel = np.asarray(relevant, dtype=bool).ravel()
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        raise NoRelevant("ranking has no relevant entry")
    # exact rational sum, rounded once, so the result does not depend on summation order
    total = sum(Fraction(j, int(pos) + 1) for j, pos in enumerate(hits, start=1))
    return float(total / hits.size)


def evaluate(evalset: EvalSet) -> dict:
    sims = evalset.query_features @ evalset.gallery_features.T
    aps = []
    cmc_hits = {k: 0 for k in CMC_TOPK}
    skipped = 0
    for q in range(len(evalset.query_ids)):
        order = _rank(sims[q], evalset.query_ids[q], evalset.query_cams[q], evalset)
        rel = evalset.gallery_ids[order] == evalset.query_ids[q]
        try:
            aps.append(average_precision(rel))
        except NoRelevant:
            skipped += 1
            continue
        first = int(np.argmax(rel))
        for k in CMC_TOPK:
            cmc_hits[k] += first < k
    if not aps:
        raise NoValidQueries("no query has a cross-camera match in the gallery")
    n = len(aps)
    return {
        "map": float(np.sum(aps) / n),
        "cmc": {k: cmc_hits[k] / n for k in CMC_TOPK},
        "num_queries": n,
        "num_skipped": skipped,
    }


def to_json_dict(result: dict) -> dict:
    return {
        "map": result["map"],
        "cmc1": result["cmc"][1],
        "cmc5": result["cmc"][5],
        "cmc10": result["cmc"][10],
        "num_queries": result["num_queries"],
        "num_skipped": result["num_skipped"],
    }
