import math
import time

import numpy as np
import pytest

from hybridcl.clustering import ClusterLabeling
from hybridcl.ensemble import priority
from hybridcl.errors import AllAnchorsIsolated, AllAnchorsNoise, ConfigInvalid, NoClusters
from hybridcl.losses import (Batch, LossConfig, centroids, cluster_nce_loss, grad_check, hcl_loss,
                             pc_loss)
from hybridcl.numcore import l2_normalize, make_rng

from instances import random_instance, two_level_priority

TAU = LossConfig(0.05)


def loss_fns(mem, labeling, idx, prio):
    cents = centroids(mem, labeling)
    return {
        "cluster_nce": lambda f: cluster_nce_loss(Batch(idx, f), cents, labeling, TAU),
        "hcl": lambda f: hcl_loss(Batch(idx, f), mem, labeling, cents, TAU),
        "pc": lambda f: pc_loss(Batch(idx, f), mem, prio, TAU),
    }


def test_centroid_examples():
    mem = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    c = centroids(mem, ClusterLabeling.from_labels([0, 0, 1]))
    np.testing.assert_allclose(c.means, [[0.5, 0.5], [0.6, 0.8]], atol=1e-15)
    assert np.linalg.norm(c.means[0]) == pytest.approx(math.sqrt(0.5))
    with pytest.raises(NoClusters):
        centroids(mem, ClusterLabeling.from_labels([-1, -1, -1]))


def test_cluster_nce_scalar_example():
    mem = np.array([[1.0, 0.0], [0.0, 1.0]])
    lab = ClusterLabeling.from_labels([0, 1])
    rep = cluster_nce_loss(Batch([0], [[1.0, 0.0]]), centroids(mem, lab), lab, TAU)
    expected = -math.log(math.exp(20) / (math.exp(20) + 1))
    assert rep.value == pytest.approx(expected, rel=1e-9)
    assert rep.value == pytest.approx(2.061e-9, rel=1e-3)


def test_single_cluster_gives_zero_loss_and_gradient():
    rng = make_rng(0)
    mem = l2_normalize(rng.normal(size=(10, 4)))
    lab = ClusterLabeling.from_labels([0] * 10)
    cents = centroids(mem, lab)
    fn = lambda f: cluster_nce_loss(Batch([0, 3], f), cents, lab, TAU)
    rep = fn(mem[[0, 3]].copy())
    assert rep.value == 0.0 and not rep.grad.any()
    assert grad_check(fn, mem[[0, 3]]) == 0.0
    hrep = hcl_loss(Batch([0, 3], mem[[0, 3]]), mem, lab, cents, TAU)
    assert hrep.value == 0.0


def test_symmetric_anchors_have_equal_terms():
    mem = np.array([[1.0, 0.0], [0.0, 1.0]])
    lab = ClusterLabeling.from_labels([0, 1])
    cents = centroids(mem, lab)
    both = cluster_nce_loss(Batch([0, 1], mem), cents, lab, TAU)
    one = cluster_nce_loss(Batch([0], mem[:1]), cents, lab, TAU)
    assert both.value == pytest.approx(one.value, rel=1e-12)


def test_hcl_scalar_example_and_duplicate_negative():
    mem = np.array([[1.0, 0.0], [0.0, 1.0]])
    lab = ClusterLabeling.from_labels([0, 1])
    cents = centroids(mem, lab)
    rep = hcl_loss(Batch([0], [[1.0, 0.0]]), mem, lab, cents, TAU)
    assert rep.value == pytest.approx(2.061e-9, rel=1e-3)
    assert rep.per_anchor[0].s_plus == pytest.approx(math.exp(20))
    mem2 = np.array([[1.0, 0.0], [0.6, 0.8], [0.6, 0.8]])
    lab2 = ClusterLabeling.from_labels([0, 1, 2])
    f = np.array([[0.8, 0.6]])
    single = hcl_loss(Batch([0], f), mem2[:2], ClusterLabeling.from_labels([0, 1]),
                      centroids(mem2[:2], ClusterLabeling.from_labels([0, 1])), TAU)
    double = hcl_loss(Batch([0], f), mem2, lab2, centroids(mem2, lab2), TAU)
    assert double.value > single.value


def test_pc_scalar_example():
    # anchor 0: itself (p=1, sim 1), neighbour 1 (p=0.5, sim 0.8), negative 2 (sim 0)
    mem = np.array([[1.0, 0.0, 0.0], [0.8, 0.6, 0.0], [0.0, 0.0, 1.0]])
    prio = priority([ClusterLabeling.from_labels([0, 0, 1]), ClusterLabeling.from_labels([0, 1, 2])])
    assert prio.toarray()[0].tolist() == [1.0, 0.5, 0.0]
    rep = pc_loss(Batch([0], mem[:1]), mem, prio, TAU)
    s_plus = math.exp((1.0 + 0.5 * 0.8) / 1.5 / 0.05)
    assert rep.per_anchor[0].s_plus == pytest.approx(s_plus, rel=1e-12)
    assert rep.value == pytest.approx(-math.log(s_plus / (s_plus + 1.0)), rel=1e-9)
    assert rep.value == pytest.approx(7.83e-9, rel=2e-3)


def test_pc_no_negatives_and_isolated_anchors():
    mem = l2_normalize(make_rng(1).normal(size=(4, 3)))
    full = priority([ClusterLabeling.from_labels([0, 0, 0, 0])])
    rep = pc_loss(Batch([0, 1], mem[:2]), mem, full, TAU)
    assert rep.value == 0.0 and rep.per_anchor[0].s_minus == 0.0
    iso = priority([ClusterLabeling.from_labels([-1, -1, 0, 0])])
    with pytest.raises(AllAnchorsIsolated):
        pc_loss(Batch([0, 1], mem[:2]), mem, iso, TAU)
    part = pc_loss(Batch([0, 2], mem[[0, 2]]), mem, iso, TAU)
    assert [a.included for a in part.per_anchor] == [False, True]
    assert not part.grad[0].any()


def test_all_noise_batch_raises():
    mem = np.eye(3)
    lab = ClusterLabeling.from_labels([-1, 0, 0])
    with pytest.raises(AllAnchorsNoise):
        hcl_loss(Batch([0], mem[:1]), mem, lab, centroids(mem, lab), TAU)
    with pytest.raises(AllAnchorsNoise):
        cluster_nce_loss(Batch([0], mem[:1]), centroids(mem, lab), lab, TAU)


def test_tau_must_be_positive():
    with pytest.raises(ConfigInvalid):
        LossConfig(0.0)


def test_grad_check_eps_range():
    mem, lab, idx, f = random_instance(make_rng(2))
    fn = loss_fns(mem, lab, idx, priority([lab]))["hcl"]
    for eps in (1.0, 1e-9):
        with pytest.raises(ConfigInvalid):
            grad_check(fn, f, eps)


def test_gradients_match_finite_differences():
    rng = make_rng(31)
    t0 = time.perf_counter()
    worst = {}
    for _ in range(20):
        mem, lab, idx, f = random_instance(rng)
        prio = two_level_priority(lab)
        for name, fn in loss_fns(mem, lab, idx, prio).items():
            assert np.max(np.abs(fn(f).grad)) > 1e-6
            worst[name] = max(worst.get(name, 0.0), grad_check(fn, f))
    assert set(worst) == {"cluster_nce", "hcl", "pc"}
    assert max(worst.values()) <= 1e-4, worst
    assert time.perf_counter() - t0 < 10.0


def test_single_labeling_pc_equals_hcl():
    rng = make_rng(8)
    for _ in range(50):
        mem, lab, idx, f = random_instance(rng)
        h = hcl_loss(Batch(idx, f), mem, lab, centroids(mem, lab), TAU)
        p = pc_loss(Batch(idx, f), mem, priority([lab], 1), TAU)
        assert abs(p.value - h.value) <= 1e-9
        assert np.max(np.abs(p.grad - h.grad)) <= 1e-9


def test_losses_nonnegative_and_positive_with_negatives():
    rng = make_rng(9)
    for _ in range(10):
        mem, lab, idx, f = random_instance(rng)
        for fn in loss_fns(mem, lab, idx, priority([lab])).values():
            assert fn(f).value > 0.0


def test_batch_permutation_invariance():
    rng = make_rng(10)
    mem, lab, idx, f = random_instance(rng)
    perm = rng.permutation(len(idx))
    prio = priority([lab])
    for name in ("cluster_nce", "hcl", "pc"):
        a = loss_fns(mem, lab, idx, prio)[name](f)
        b = loss_fns(mem, lab, idx[perm], prio)[name](f[perm])
        assert a.value == pytest.approx(b.value, rel=1e-13)
        np.testing.assert_allclose(a.grad[perm], b.grad, rtol=1e-12, atol=1e-15)


def test_extreme_similarities_stay_finite():
    mem = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    lab = ClusterLabeling.from_labels([0, 1, 2])
    rep = hcl_loss(Batch([1], [[1.0, 0.0]]), mem, lab, centroids(mem, lab), LossConfig(0.01))
    assert math.isfinite(rep.value) and np.all(np.isfinite(rep.grad))
    assert rep.value == pytest.approx(200.0 + math.log(2.0), rel=1e-12)
