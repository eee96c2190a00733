"""Predictive label distributions that integrate over tree extensions.

A test point lying outside a node's data box could have split off into its
own leaf somewhere above that node.  :func:`predict_tree` sums, along the
root-to-leaf path, the probability of branching off at each node times the
posterior mean of the would-be new parent, averaged over its split time.
:func:`predict_tree_mc_oracle` estimates the same quantity by sampling the
extension directly and is kept as an independent check.
"""

from __future__ import annotations

import math

import numpy as np

from .posterior import PosteriorParams, node_discount
from .rand import RngStream, expected_truncated_discount, sample_exponential

__all__ = [
    "branch_off_probability",
    "predict_tree",
    "predict_tree_batch",
    "predict_tree_mc_oracle",
    "prediction_diagnostics",
    "sample_branch_node",
]


def branch_off_probability(lower, upper, delta: float, x) -> tuple[float, float]:
    """Return ``(eta, p_s)`` for a node with data box ``[lower, upper]``.

    ``eta`` is the L1 distance from ``x`` to the box and
    ``p_s = 1 - exp(-delta * eta)`` the chance that a split separating ``x``
    appeared during the node's lifetime ``delta``.
    """
    x = np.asarray(x, dtype=np.float64)
    eta = float(np.maximum(x - upper, 0.0).sum() + np.maximum(lower - x, 0.0).sum())
    if eta == 0.0 or delta == 0.0:
        return eta, 0.0
    if math.isinf(delta):
        return eta, 1.0
    return eta, -math.expm1(-delta * eta)


def _mean(c, tab, d, parent_mean):
    total = c.sum()
    if total == 0:
        return parent_mean
    return (c - d * tab + d * tab.sum() * parent_mean) / total


def predict_tree(tree, params: PosteriorParams, x) -> np.ndarray:
    """Predictive distribution of one tree at a single point."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.num_features,):
        raise ValueError(f"expected {tree.num_features} features, got shape {x.shape}")
    gamma = params.gamma
    s = np.zeros(tree.num_classes)
    p_not_separated = 1.0
    parent_mean = params.base_distribution
    j = tree.root
    while True:
        tau_parent = tree.tau_parent(j)
        delta = tree.tau[j] - tau_parent
        eta, p_s = branch_off_probability(tree.lower[j], tree.upper[j], delta, x)
        c = tree.counts[j].astype(np.float64)
        tab = tree.tables[j].astype(np.float64)
        if p_s > 0.0:
            d_bar = expected_truncated_discount(eta, gamma, delta)
            # the new parent sees one table per label present below it
            branch_mean = _mean(tab, tab, d_bar, parent_mean)
            s += p_not_separated * p_s * branch_mean
        node_mean = _mean(c, tab, node_discount(params, tree.tau[j], tau_parent), parent_mean)
        if tree.left[j] < 0:
            s += p_not_separated * (1.0 - p_s) * node_mean
            return s
        p_not_separated *= 1.0 - p_s
        parent_mean = node_mean
        j = tree.left[j] if x[tree.split_dim[j]] <= tree.split_loc[j] else tree.right[j]


def predict_tree_batch(tree, params: PosteriorParams, X) -> np.ndarray:
    """:func:`predict_tree` for every row of ``X``, traversing level by level."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != tree.num_features:
        raise ValueError(f"expected {tree.num_features} features, got {X.shape[1]}")
    n, K = X.shape[0], tree.num_classes
    m = tree.num_nodes
    gamma = params.gamma
    left = np.asarray(tree.left, dtype=np.int64)
    right = np.asarray(tree.right, dtype=np.int64)
    dim = np.asarray(tree.split_dim, dtype=np.int64)
    loc = np.asarray(tree.split_loc, dtype=np.float64)
    tau = np.asarray(tree.tau, dtype=np.float64)
    parent = np.asarray(tree.parent, dtype=np.int64)
    tau_parent = np.where(parent >= 0, tau[np.maximum(parent, 0)], 0.0)
    delta = tau - tau_parent
    discount = np.exp(-gamma * delta)
    lower, upper = tree.lower[:m], tree.upper[:m]
    counts = tree.counts[:m].astype(np.float64)
    tables = tree.tables[:m].astype(np.float64)

    out = np.zeros((n, K))
    rows = np.arange(n)
    cur = np.full(n, tree.root, dtype=np.int64)
    p_not = np.ones(n)
    parent_mean = np.tile(params.base_distribution, (n, 1))
    while rows.size:
        j = cur
        x = X[rows]
        eta = (np.maximum(x - upper[j], 0.0) + np.maximum(lower[j] - x, 0.0)).sum(axis=1)
        dj = delta[j]
        outside = eta > 0
        p_s = np.zeros(rows.size)
        with np.errstate(invalid="ignore", over="ignore"):
            p_s[outside] = np.where(
                np.isinf(dj[outside]), 1.0, -np.expm1(-dj[outside] * eta[outside])
            )
        branch = p_s > 0
        if branch.any():
            e, dl = eta[branch], dj[branch]
            ratio = e / (e + gamma)
            finite = ~np.isinf(dl)
            d_bar = ratio.copy()
            d_bar[finite] *= np.expm1(-(e[finite] + gamma) * dl[finite]) / np.expm1(-e[finite] * dl[finite])
            tab = tables[j[branch]]
            tot = tab.sum(axis=1, keepdims=True)
            bm = (tab - d_bar[:, None] * tab + d_bar[:, None] * tot * parent_mean[branch]) / np.where(tot > 0, tot, 1)
            bm = np.where(tot > 0, bm, parent_mean[branch])
            out[rows[branch]] += (p_not[branch] * p_s[branch])[:, None] * bm
        c = counts[j]
        tab = tables[j]
        ctot = c.sum(axis=1, keepdims=True)
        d = discount[j][:, None]
        node_mean = (c - d * tab + d * tab.sum(axis=1, keepdims=True) * parent_mean) / np.where(ctot > 0, ctot, 1)
        node_mean = np.where(ctot > 0, node_mean, parent_mean)
        leaf = left[j] < 0
        if leaf.any():
            out[rows[leaf]] += (p_not[leaf] * (1.0 - p_s[leaf]))[:, None] * node_mean[leaf]
        keep = ~leaf
        jk = j[keep]
        go_left = x[keep, dim[jk]] <= loc[jk]
        cur = np.where(go_left, left[jk], right[jk])
        p_not = p_not[keep] * (1.0 - p_s[keep])
        parent_mean = node_mean[keep]
        rows = rows[keep]
    return out


def predict_tree_mc_oracle(
    tree, params: PosteriorParams, x, num_samples: int, rng: RngStream
) -> np.ndarray:
    """Monte-Carlo estimate of :func:`predict_tree` by sampling extensions.

    Each sample walks the root-to-leaf path of ``x``.  At every node whose
    box misses ``x`` a split time is drawn from ``Exp(eta)``; the first node
    where that time falls inside the node's lifetime is where ``x`` gets its
    own leaf, whose posterior mean (with the sampled split-time gap) is the
    sample's prediction.  Samples that never branch off use the leaf's
    posterior mean.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    path, leaf_mean, gaps, parent_means = _mc_setup(tree, params, x)
    out = np.zeros(tree.num_classes)
    remaining = np.ones(num_samples, dtype=bool)
    for j, (eta, delta), parent_mean in zip(path, gaps, parent_means):
        if eta == 0.0 or delta == 0.0:
            continue
        alive = np.flatnonzero(remaining)
        if alive.size == 0:
            break
        t = rng.standard_exponential_array(alive.size) / eta
        hit = t < delta
        if not hit.any():
            continue
        tab = tree.tables[j].astype(np.float64)
        d = np.exp(-params.gamma * t[hit])
        tot = tab.sum()
        if tot > 0:
            means = (tab[None, :] * (1.0 - d[:, None]) + d[:, None] * tot * parent_mean[None, :]) / tot
        else:
            means = np.tile(parent_mean, (hit.sum(), 1))
        out += means.sum(axis=0)
        remaining[alive[hit]] = False
    if remaining.all():
        return leaf_mean.copy()
    out += remaining.sum() * leaf_mean
    return out / num_samples


def _mc_setup(tree, params, x):
    x = np.asarray(x, dtype=np.float64)
    path = tree.path_to_leaf(x)
    parent_mean = params.base_distribution
    parent_means = []
    gaps = []
    for j in path:
        tau_parent = tree.tau_parent(j)
        delta = tree.tau[j] - tau_parent
        eta = float(np.maximum(x - tree.upper[j], 0).sum() + np.maximum(tree.lower[j] - x, 0).sum())
        parent_means.append(parent_mean)
        gaps.append((eta, delta))
        d = node_discount(params, tree.tau[j], tau_parent)
        c = tree.counts[j].astype(np.float64)
        tab = tree.tables[j].astype(np.float64)
        if c.sum() > 0:
            parent_mean = (c - d * tab + d * tab.sum() * parent_mean) / c.sum()
    return path, parent_mean, gaps, parent_means


def sample_branch_node(tree, x, rng: RngStream) -> tuple[int, float]:
    """One draw of where ``x`` would split off: ``(node, split-time gap)``.

    Returns ``(leaf, nan)`` when ``x`` reaches its leaf without branching.
    Scalar, loop-based twin of the oracle's sampling step.
    """
    x = np.asarray(x, dtype=np.float64)
    path = tree.path_to_leaf(x)
    for j in path:
        delta = tree.tau[j] - tree.tau_parent(j)
        eta = float(np.maximum(x - tree.upper[j], 0).sum() + np.maximum(tree.lower[j] - x, 0).sum())
        t = sample_exponential(rng, eta)
        if t < delta:
            return j, t
    return path[-1], math.nan


def prediction_diagnostics(tree, x) -> list[dict]:
    """Per-node ``eta`` and branch-off probability along the path of ``x``."""
    rows = []
    for j in tree.path_to_leaf(x):
        delta = tree.tau[j] - tree.tau_parent(j)
        eta, p_s = branch_off_probability(tree.lower[j], tree.upper[j], delta, x)
        rows.append({"node": j, "delta": delta, "eta": eta, "p_s": p_s})
    return rows
