"""Hierarchical label smoothing with the interpolated Kneser-Ney approximation.

Every node ``j`` carries customer counts ``c[j, k]`` and table counts
``tab[j, k] = min(c[j, k], 1)``.  A leaf's customers are its training
labels; an internal node's customers are the tables of its two children.
The posterior mean at a node interpolates between its own counts and the
parent's posterior mean, with discount ``exp(-gamma * (tau_j - tau_parent))``.

The count arrays live in the tree's node arena (``tree.counts`` and
``tree.tables``); the functions here only read and write them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PosteriorParams",
    "node_discount",
    "initialize_posterior_counts",
    "update_posterior_counts",
    "posterior_mean",
    "recompute_counts",
    "posterior_means_along_path",
]


@dataclass(frozen=True)
class PosteriorParams:
    gamma: float
    num_classes: int

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        if self.num_classes < 1:
            raise ValueError("num_classes must be at least 1")

    @property
    def base_distribution(self) -> np.ndarray:
        """Uniform prior over the labels."""
        return np.full(self.num_classes, 1.0 / self.num_classes)


def node_discount(params: PosteriorParams, tau_j: float, tau_parent: float) -> float:
    if tau_j < tau_parent:
        raise ValueError(f"tau_j={tau_j} precedes tau_parent={tau_parent}")
    gap = tau_j - tau_parent
    if math.isinf(gap):
        return 0.0
    return math.exp(-params.gamma * gap)


def initialize_posterior_counts(tree, j: int) -> None:
    """Set leaf ``j``'s counts from its labels and refresh its ancestors.

    Stops once a node's tables come out unchanged: nothing above it reads
    anything else from below.
    """
    counts, tables, left, right = tree.counts, tree.tables, tree.left, tree.right
    counts[j] = np.bincount(tree.store.labels[tree.points[j]], minlength=tree.num_classes)
    node = j
    while True:
        if left[node] >= 0:
            counts[node] = tables[left[node]] + tables[right[node]]
        new = np.minimum(counts[node], 1)
        if (new == tables[node]).all():
            return
        tables[node] = new
        if node == tree.root:
            return
        node = tree.parent[node]


def update_posterior_counts(tree, j: int, y: int) -> None:
    """Add one label-``y`` customer at leaf ``j``.

    A node's ``y`` count is refreshed whenever a child's ``y`` table
    changes; propagation stops at the first node whose own table is
    unchanged, since nothing above it can change.
    """
    counts, tables, left, right = tree.counts, tree.tables, tree.left, tree.right
    counts[j, y] += 1
    node = j
    while True:
        if tables[node, y] == 1:
            return
        tables[node, y] = min(counts[node, y], 1)
        if node == tree.root:
            return
        node = tree.parent[node]
        counts[node, y] = tables[left[node], y] + tables[right[node], y]


def _interpolate(c, tab, d, parent_mean):
    total = c.sum()
    if total == 0:
        return parent_mean.copy()
    return (c - d * tab + d * tab.sum() * parent_mean) / total


def posterior_mean(tree, params: PosteriorParams, j: int, parent_mean) -> np.ndarray:
    """Posterior mean label distribution at node ``j`` given its parent's."""
    d = node_discount(params, tree.tau[j], tree.tau_parent(j))
    return _interpolate(
        tree.counts[j].astype(np.float64),
        tree.tables[j].astype(np.float64),
        d,
        np.asarray(parent_mean, dtype=np.float64),
    )


def posterior_means_along_path(tree, params: PosteriorParams, path) -> list[np.ndarray]:
    """Top-down posterior means for ``path`` (a root-first list of node ids)."""
    means = []
    parent_mean = params.base_distribution
    for j in path:
        parent_mean = posterior_mean(tree, params, j, parent_mean)
        means.append(parent_mean)
    return means


def recompute_counts(tree) -> tuple[np.ndarray, np.ndarray]:
    """Counts and tables for every live node, rebuilt bottom-up from the leaves.

    Returns fresh ``(counts, tables)`` arrays indexed like the arena and
    leaves the tree untouched.
    """
    n = tree.num_nodes
    counts = np.zeros((n, tree.num_classes), dtype=np.int64)
    tables = np.zeros_like(counts)
    for j in tree.postorder():
        if tree.left[j] < 0:
            counts[j] = np.bincount(tree.store.labels[tree.points[j]], minlength=tree.num_classes)
        else:
            counts[j] = tables[tree.left[j]] + tables[tree.right[j]]
        tables[j] = np.minimum(counts[j], 1)
    return counts, tables
