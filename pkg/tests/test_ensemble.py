from fractions import Fraction

import numpy as np
import pytest

from hybridcl.clustering import ClusterLabeling, DbscanParams, dbscan
from hybridcl.ensemble import (GranularityLadder, PriorityMatrix, affinity, build_priority,
                               cluster_ladder, priority)
from hybridcl.errors import ConfigInvalid, LengthMismatch
from hybridcl.numcore import l2_normalize, make_rng


def lab(values):
    return ClusterLabeling.from_labels(values)


def test_affinity_examples():
    assert affinity(lab([0, 0, 1])).toarray().tolist() == [[1, 1, 0], [1, 1, 0], [0, 0, 1]]
    assert affinity(lab([-1, -1])).toarray().tolist() == [[1, 0], [0, 1]]
    assert affinity(lab([0, 0, 0])).toarray().tolist() == [[1] * 3] * 3


def test_priority_hand_example():
    p = priority([lab([0, 0, 1]), lab([0, 1, 1])], 2).toarray()
    assert p.tolist() == [[1, 0.5, 0], [0.5, 1, 0.5], [0, 0.5, 1]]


def test_priority_of_identical_labelings_is_affinity():
    one = lab([0, -1, 1, 0, 1, -1])
    assert np.array_equal(priority([one] * 4, 4).toarray(), affinity(one).toarray())
    assert set(np.unique(priority([one]).toarray()).tolist()) <= {0.0, 1.0}


def test_priority_length_mismatch():
    with pytest.raises(LengthMismatch):
        priority([lab([0, 0])], 2)
    with pytest.raises(LengthMismatch):
        priority([lab([0, 0]), lab([0, 0, 0])])


def test_ladder_values():
    assert GranularityLadder().values == (0.4, 0.45, 0.5, 0.55, 0.6)
    assert GranularityLadder(0.4, 0.6, 0.02).t == 11
    assert GranularityLadder(0.4, 0.6, 0.01).t == 21
    assert GranularityLadder.parse("0.3").values == (0.3,)
    assert GranularityLadder.parse("0.4:0.6:0.05") == GranularityLadder()
    for bad in ("0.6:0.4:0.05", "0.4:0.6:0", "a:b"):
        with pytest.raises(ConfigInvalid):
            GranularityLadder.parse(bad)


def test_single_step_ladder_equals_single_run_affinity():
    x = l2_normalize(make_rng(0).normal(size=(40, 4)))
    prio, _ = build_priority(x, GranularityLadder.single(0.3), 4)
    assert np.array_equal(prio.toarray(), affinity(dbscan(x, DbscanParams(0.3, 4))).toarray())


def test_coincident_points_in_blob_have_full_priority():
    rng = make_rng(1)
    blob = np.array([1.0, 0.0, 0.0]) + 0.05 * rng.normal(size=(10, 3))
    x = l2_normalize(np.vstack([blob, blob[:1]]))
    prio, _ = build_priority(x, GranularityLadder(), 4)
    assert prio.toarray()[0, 10] == 1.0


def test_antipodal_singletons():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    ladder = GranularityLadder(0.1, 1.5, 1.4)
    assert ladder.values == (0.1, 1.5)
    prio, _ = build_priority(x, ladder, 1)
    # 1.5 is still below the antipodal distance 2, so they never meet
    assert prio.toarray()[0, 1] == 0.0
    labs = [lab([0, 1]), lab([0, 0])]
    assert priority(labs).toarray()[0, 1] == 0.5


def _random_points(rng):
    n = int(rng.integers(5, 150))
    d = int(rng.integers(2, 12))
    centers = rng.normal(size=(int(rng.integers(1, 6)), d))
    return l2_normalize(centers[rng.integers(0, len(centers), n)] + rng.uniform(0.1, 0.5) * rng.normal(size=(n, d)))


def test_priority_structure_on_random_instances():
    rng = make_rng(404)
    for _ in range(100):
        x = _random_points(rng)
        lo = float(rng.uniform(0.05, 0.4))
        ladder = GranularityLadder(lo, lo + float(rng.uniform(0.0, 0.3)), float(rng.choice([0.01, 0.02, 0.05])))
        min_pts = int(rng.integers(1, 7))
        prio, labelings = build_priority(x, ladder, min_pts)
        p = prio.toarray()
        assert np.array_equal(p, p.T)
        assert np.all(np.diag(p) == 1.0)
        k = p * ladder.t
        assert np.array_equal(k, np.round(k)) and k.min() >= 0 and k.max() <= ladder.t
        # every k/t is an exact fraction of the ladder length
        assert all(Fraction(v).limit_denominator(ladder.t) * ladder.t == round(v * ladder.t) for v in np.unique(p))
        aff = [affinity(lb).toarray() for lb in labelings]
        for a, b in zip(aff, aff[1:]):
            assert np.all(b >= a)


def test_priority_csv_round_trip():
    x = _random_points(make_rng(5))
    prio, _ = build_priority(x, GranularityLadder(0.2, 0.4, 0.05), 3)
    back = PriorityMatrix.from_csv(prio.to_csv())
    assert np.array_equal(back.toarray(), prio.toarray())
    assert back.to_csv() == prio.to_csv()
    assert prio.to_csv().splitlines()[0] == f"{prio.n},{prio.t}"


def test_row_access_is_sorted_and_consistent():
    x = _random_points(make_rng(6))
    prio, _ = build_priority(x, GranularityLadder(0.2, 0.4, 0.05), 3)
    dense = prio.toarray()
    for i in range(prio.n):
        cols, w = prio.row(i)
        assert np.all(np.diff(cols) > 0)
        assert np.array_equal(dense[i, cols], w)
        assert np.count_nonzero(dense[i]) == cols.size


def test_ladder_shares_distance_matrix():
    x = _random_points(make_rng(7))
    ladder = GranularityLadder(0.1, 0.3, 0.1)
    got = cluster_ladder(x, ladder, 4)
    assert got[0].labels.tolist() == dbscan(x, DbscanParams(0.1, 4)).labels.tolist()
    for d, g in zip(ladder.values, got):
        assert g.num_clusters == dbscan(x, DbscanParams(d, 4)).num_clusters
