import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mondrian.harness import grow_online
from mondrian.posterior import PosteriorParams, posterior_means_along_path
from mondrian.prediction import (
    branch_off_probability,
    prediction_diagnostics,
    predict_tree,
    predict_tree_batch,
    predict_tree_mc_oracle,
    sample_branch_node,
)
from mondrian.rand import RngStream
from mondrian.tree import extend_mondrian_tree, sample_mondrian_tree


def _random_tree(seed, n=25, d=2, k=3, lifetime=math.inf, pausing=False):
    g = np.random.default_rng(seed)
    X, y = g.random((n, d)), g.integers(0, k, n)
    return grow_online(X, y, k, lifetime, RngStream(seed), use_pausing=pausing), X


# -- branch-off probability ----------------------------------------------

def test_inside_box_never_branches():
    assert branch_off_probability(np.zeros(2), np.ones(2), 3.0, [0.5, 1.0]) == (0.0, 0.0)


def test_infinite_lifetime_outside_always_branches():
    eta, p = branch_off_probability(np.zeros(2), np.ones(2), math.inf, [1.1, 0.8])
    assert eta == pytest.approx(0.1) and p == 1.0


def test_finite_gap_probability():
    eta, p = branch_off_probability(np.zeros(2), np.ones(2), 2.0, [-0.25, 1.25])
    series = 1.0 - math.fsum((-1) ** n / math.factorial(n) for n in range(30))
    assert eta == 0.5
    assert p == pytest.approx(series, rel=1e-14)


def test_zero_gap_never_branches():
    assert branch_off_probability(np.zeros(1), np.ones(1), 0.0, [5.0])[1] == 0.0


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0.01, 10))
def test_branch_probability_grows_with_distance(a, b, delta):
    near, far = sorted((a, b))
    p_near = branch_off_probability(np.zeros(1), np.ones(1), delta, [1.0 + near])[1]
    p_far = branch_off_probability(np.zeros(1), np.ones(1), delta, [1.0 + far])[1]
    assert p_near <= p_far


# -- analytic prediction --------------------------------------------------

def test_single_point_tree_predicts_its_label():
    tree = sample_mondrian_tree(np.array([[0.2, 0.7]]), np.array([0]), 2)
    out = predict_tree(tree, PosteriorParams(3.0, 2), [0.2, 0.7])
    assert out.tolist() == [1.0, 0.0]


def test_interior_point_gets_leaf_posterior():
    tree, X = _random_tree(4)
    params = PosteriorParams(20.0, 3)
    x = X[7]
    path = tree.path_to_leaf(x)
    leaf_mean = posterior_means_along_path(tree, params, path)[-1]
    assert np.array_equal(predict_tree(tree, params, x), leaf_mean)


def test_far_point_falls_back_towards_the_prior():
    tree, _ = _random_tree(5)
    params = PosteriorParams(20.0, 3)
    out = predict_tree(tree, params, [1e6, -1e6])
    # branching off at the root with an almost undiscounted new parent
    assert out == pytest.approx(predict_tree(tree, params, [1e7, -1e7]), abs=1e-6)


def test_dimension_mismatch_rejected():
    tree, _ = _random_tree(1)
    with pytest.raises(ValueError):
        predict_tree(tree, PosteriorParams(1.0, 3), [0.1])
    with pytest.raises(ValueError):
        predict_tree_batch(tree, PosteriorParams(1.0, 3), np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30), st.integers(1, 3), st.integers(2, 4),
       st.sampled_from([math.inf, 0.5, 3.0]), st.booleans(), st.floats(0.1, 50))
def test_batch_prediction_matches_scalar(seed, n, d, k, lifetime, pausing, gamma):
    tree, _ = _random_tree(seed, n, d, k, lifetime, pausing)
    params = PosteriorParams(gamma, k)
    Q = np.random.default_rng(seed + 1).uniform(-0.5, 1.5, size=(20, d))
    batch = predict_tree_batch(tree, params, Q)
    for q, row in zip(Q, batch):
        assert np.allclose(row, predict_tree(tree, params, q), atol=1e-13, rtol=0)
        assert abs(row.sum() - 1.0) < 1e-9 and np.all(row >= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([math.inf, 0.3, 2.0]), st.booleans())
def test_mixture_weights_sum_to_one(seed, lifetime, pausing):
    tree, _ = _random_tree(seed, lifetime=lifetime, pausing=pausing)
    x = np.random.default_rng(seed).uniform(-1, 2, size=2)
    rows = prediction_diagnostics(tree, x)
    survive, total = 1.0, 0.0
    for r in rows:
        total += survive * r["p_s"]
        survive *= 1.0 - r["p_s"]
    total += survive   # the leaf term, already multiplied through by (1 - p_s)
    assert abs(total - 1.0) < 1e-12
    assert survive == pytest.approx(np.prod([1 - r["p_s"] for r in rows]), abs=1e-15)


# -- Monte-Carlo oracle ---------------------------------------------------

@pytest.mark.parametrize("seed,lifetime,pausing", [(0, math.inf, False), (1, 2.0, True),
                                                   (2, math.inf, True), (3, 0.7, False)])
def test_mc_oracle_agrees_with_analytic(seed, lifetime, pausing):
    tree, _ = _random_tree(seed, lifetime=lifetime, pausing=pausing)
    params = PosteriorParams(5.0, 3)
    x = np.array([1.3, -0.2])
    n = 100_000
    mc = predict_tree_mc_oracle(tree, params, x, n, RngStream(seed, 9))
    exact = predict_tree(tree, params, x)
    # each sample is a probability vector, so per-class variance is at most 1/4
    assert np.max(np.abs(mc - exact)) < 4 * math.sqrt(0.25 / n)


def test_mc_oracle_interior_is_exact():
    tree, X = _random_tree(6)
    params = PosteriorParams(5.0, 3)
    assert np.array_equal(predict_tree_mc_oracle(tree, params, X[0], 10, RngStream()),
                          predict_tree(tree, params, X[0]))


def test_mc_oracle_single_sample_is_a_distribution():
    tree, _ = _random_tree(7)
    out = predict_tree_mc_oracle(tree, PosteriorParams(5.0, 3), [2.0, 2.0], 1, RngStream())
    assert abs(out.sum() - 1.0) < 1e-12 and np.all(out >= 0)
    with pytest.raises(ValueError):
        predict_tree_mc_oracle(tree, PosteriorParams(5.0, 3), [2.0, 2.0], 0, RngStream())


def test_branch_sampler_matches_literal_extension():
    """Where x splits off, drawn directly vs by really extending a copy."""
    # five nodes on the path, each with a real chance of branching
    tree, _ = _random_tree(11, n=12, lifetime=6.0)
    x = np.array([1.1, 0.5])
    n = 3000
    direct_nodes, direct_gaps = [], []
    rng = RngStream(11, 1)
    for _ in range(n):
        j, t = sample_branch_node(tree, x, rng)
        if math.isnan(t):
            direct_nodes.append(-1)
        else:
            direct_nodes.append(j)
            direct_gaps.append(t)
    ext_nodes, ext_gaps = [], []
    for s in range(n):
        dup = tree.copy()
        dup.rng = RngStream(s, 2)
        before = dup.num_nodes
        extend_mondrian_tree(dup, (x, 0))
        leaf = dup.path_to_leaf(x)[-1]
        p = dup.parent[leaf]
        if p >= before:
            # a new parent was inserted above some original node j
            j = dup.left[p] if dup.right[p] == leaf else dup.right[p]
            ext_nodes.append(j)
            ext_gaps.append(dup.tau[p] - dup.tau_parent(p))
        else:
            ext_nodes.append(-1)
    a, b = Counter(direct_nodes), Counter(ext_nodes)
    keys = sorted(set(a) | set(b))
    table = np.array([[a[k] for k in keys], [b[k] for k in keys]])
    if len(keys) > 1:
        assert stats.chi2_contingency(table).pvalue > 0.001
    assert stats.ks_2samp(direct_gaps, ext_gaps).pvalue > 0.001
