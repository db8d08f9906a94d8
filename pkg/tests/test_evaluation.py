import itertools

import numpy as np
import pytest

from hybridcl.errors import NoRelevant, NoValidQueries
from hybridcl.evaluation import EvalSet, average_precision, evaluate, rank_gallery, to_json_dict
from hybridcl.numcore import l2_normalize, make_rng

from oracles import area_average_precision, brute_force_eval


def test_ap_examples():
    assert average_precision([1, 0, 0]) == 1.0
    assert average_precision([1, 0, 1, 0]) == pytest.approx(0.833333, abs=1e-6)
    assert abs(average_precision([1, 0, 1]) - 5 / 6) <= 1e-9
    assert average_precision([1, 1, 1, 1]) == 1.0
    with pytest.raises(NoRelevant):
        average_precision([0, 0])


def test_ap_exhaustive_against_area_oracle():
    count = 0
    for length in range(1, 13):
        for pattern in itertools.product((0, 1), repeat=length):
            if not any(pattern):
                continue
            # both sides compute the same rational; float division must agree to the last bit
            assert average_precision(pattern) == float(area_average_precision(pattern))
            count += 1
    assert count == 2 ** 13 - 2 - 12


def _evalset(rng, nq=20, ng=100, d=8, n_ids=12, cams=3):
    return EvalSet(
        l2_normalize(rng.normal(size=(nq, d))), l2_normalize(rng.normal(size=(ng, d))),
        rng.integers(0, n_ids, nq), rng.integers(-1, n_ids, ng),
        rng.integers(0, cams, nq), rng.integers(0, cams, ng),
    )


def test_evaluate_matches_bruteforce():
    rng = make_rng(3)
    for _ in range(5):
        es = _evalset(rng)
        got = evaluate(es)
        m, cmc, n = brute_force_eval(es.query_features.tolist(), es.gallery_features.tolist(),
                                     es.query_ids.tolist(), es.gallery_ids.tolist(),
                                     es.query_cams.tolist(), es.gallery_cams.tolist())
        assert got["num_queries"] == n
        assert got["map"] == pytest.approx(m, abs=1e-12)
        for k in (1, 5, 10):
            assert got["cmc"][k] == pytest.approx(cmc[k], abs=1e-12)
        assert got["cmc"][1] <= got["cmc"][5] <= got["cmc"][10]


def test_protocol_rules():
    q = np.array([[1.0, 0.0]])
    g = np.array([[1.0, 0.0], [1.0, 0.0], [0.6, 0.8], [0.6, 0.8], [1.0, 0.0]])
    es = EvalSet(q, g, [1], [1, 2, 1, 3, -1], [0], [0, 1, 1, 1, 2])
    ranking = rank_gallery(0, es).tolist()
    # same id + same cam (0) and junk (4) are dropped; equal sims keep index order
    assert ranking == [1, 2, 3]
    es2 = EvalSet(q, g[:2], [1], [1, 1], [0], [1, 1])
    assert rank_gallery(0, es2).tolist() == [0, 1]
    res = evaluate(es)
    assert res["map"] == 0.5 and res["cmc"][1] == 0.0 and res["cmc"][5] == 1.0


def test_distinct_camera_copy_is_perfect():
    x = l2_normalize(make_rng(4).normal(size=(10, 5)))
    ids = np.arange(10)
    res = evaluate(EvalSet(x, x, ids, ids, np.zeros(10), np.ones(10)))
    assert res["map"] == 1.0 and res["cmc"][1] == 1.0


def test_queries_without_match_are_skipped():
    x = l2_normalize(make_rng(5).normal(size=(3, 4)))
    res = evaluate(EvalSet(x, x, [0, 1, 9], [0, 1, 2], [0, 0, 0], [1, 1, 1]))
    assert res["num_queries"] == 2 and res["num_skipped"] == 1
    with pytest.raises(NoValidQueries):
        evaluate(EvalSet(x, x, [7, 8, 9], [0, 1, 2], [0, 0, 0], [1, 1, 1]))


def test_gallery_permutation_invariance():
    rng = make_rng(6)
    es = _evalset(rng)
    perm = rng.permutation(len(es.gallery_ids))
    es2 = EvalSet(es.query_features, es.gallery_features[perm], es.query_ids,
                  es.gallery_ids[perm], es.query_cams, es.gallery_cams[perm])
    a, b = evaluate(es), evaluate(es2)
    assert a["map"] == pytest.approx(b["map"], abs=1e-12)
    assert a["cmc"] == b["cmc"]


def test_json_dict_shape():
    out = to_json_dict(evaluate(_evalset(make_rng(7))))
    assert list(out) == ["map", "cmc1", "cmc5", "cmc10", "num_queries", "num_skipped"]
    assert all(0.0 <= out[k] <= 1.0 for k in ("map", "cmc1", "cmc5", "cmc10"))
