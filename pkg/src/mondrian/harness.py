"""Evaluation protocols behind the command-line tool.

Each function returns plain records or report dicts; formatting and file
output live in :mod:`mondrian.cli`.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .data import Dataset, make_minibatches
from .forest import ForestConfig, MondrianForest
from .posterior import PosteriorParams
from .prediction import predict_tree, predict_tree_mc_oracle, prediction_diagnostics
from .rand import RngStream
from .tree import MondrianTree, extend_mondrian_block, sample_mondrian_tree, tree_stats

__all__ = [
    "RunRecord",
    "RECORD_FIELDS",
    "TIMING_FIELDS",
    "synthetic_classification",
    "eval_online",
    "eval_batch",
    "equivalence_test",
    "order_invariance_test",
    "depth_stats",
    "depth_scaling",
    "mc_check",
    "grow_online",
]

KS_ALPHA = 0.01
TREE_STATISTICS = ("num_leaves", "max_depth", "tau_root")


@dataclass
class RunRecord:
    seed: int
    batch: int
    fraction_seen: float
    num_seen: int
    cumulative_train_seconds: float
    test_accuracy: float
    mean_weighted_depth: float


RECORD_FIELDS = [f.name for f in RunRecord.__dataclass_fields__.values()]
TIMING_FIELDS = ("cumulative_train_seconds",)


def synthetic_classification(num_points: int, num_features: int = 2, seed: int = 0,
                             noise: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Uniform points in the unit cube, two classes split by a diagonal.

    A fraction ``noise`` of the labels is flipped at random.
    """
    rng = np.random.default_rng(seed)
    X = rng.random((num_points, num_features))
    score = X[:, :2].sum(axis=1) if num_features > 1 else 2 * X[:, 0]
    y = (score > 1.0).astype(np.int64)
    flip = rng.random(num_points) < noise
    y[flip] = 1 - y[flip]
    return X, y


def _accuracy(forest: MondrianForest, test: Dataset) -> float:
    pred = forest.predict(test.features)
    return float(np.count_nonzero(pred == test.labels)) / test.num_points


def _mean_depth(forest: MondrianForest) -> float:
    return float(np.mean([s[1] for s in forest.tree_stats()]))


def eval_online(train: Dataset, test: Dataset, config: ForestConfig, num_batches: int = 100,
                shuffle: bool = True, seeds=(0,), n_jobs: int = 1, forests: list | None = None):
    """Stream the training split in mini-batches, testing after each one.

    Yields one :class:`RunRecord` per (seed, batch).  Only ``partial_fit``
    is timed.  When ``forests`` is a list, the final forest of every seed
    is appended to it.
    """
    for seed in seeds:
        cfg = _with_seed(config, seed)
        batches = make_minibatches(train.num_points, num_batches, seed if shuffle else None)
        forest = MondrianForest(cfg, n_jobs=n_jobs)
        elapsed = 0.0
        seen = 0
        for b, idx in enumerate(batches, start=1):
            start = time.perf_counter()
            forest.partial_fit(train.features[idx], train.labels[idx])
            elapsed += time.perf_counter() - start
            seen += len(idx)
            yield RunRecord(seed, b, seen / train.num_points, seen, elapsed,
                            _accuracy(forest, test), _mean_depth(forest))
        if forests is not None:
            forests.append(forest)


def eval_batch(train: Dataset, test: Dataset, config: ForestConfig, fractions=(1.0,),
               shuffle: bool = True, seeds=(0,), n_jobs: int = 1):
    """Fit a fresh forest on the first ``f * N`` (shuffled) points per fraction."""
    fractions = list(fractions)
    if any(not (0 < f <= 1) for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    if sorted(fractions) != fractions or len(set(fractions)) != len(fractions):
        raise ValueError("fractions must be strictly increasing")
    for seed in seeds:
        cfg = _with_seed(config, seed)
        order = (np.random.default_rng(seed).permutation(train.num_points) if shuffle
                 else np.arange(train.num_points))
        for b, f in enumerate(fractions, start=1):
            n = max(1, int(round(f * train.num_points)))
            idx = order[:n]
            forest = MondrianForest(cfg, n_jobs=n_jobs)
            start = time.perf_counter()
            forest.fit(train.features[idx], train.labels[idx])
            elapsed = time.perf_counter() - start
            yield RunRecord(seed, b, n / train.num_points, n, elapsed,
                            _accuracy(forest, test), _mean_depth(forest))


def _with_seed(config: ForestConfig, seed: int) -> ForestConfig:
    d = asdict(config)
    d["seed"] = seed
    return ForestConfig(**d)


# -- online/batch equivalence ---------------------------------------------

def grow_online(X, y, num_classes, lifetime, rng, use_pausing=False, order=None,
                _skip_new_parent=False) -> MondrianTree:
    """Build a tree by inserting the points one at a time (in ``order``)."""
    order = np.arange(len(y)) if order is None else np.asarray(order)
    tree = sample_mondrian_tree(X[order[:1]], y[order[:1]], num_classes, lifetime=lifetime,
                                rng=rng, use_pausing=use_pausing)
    for i in order[1:]:
        pid = tree.store.append(X[i], int(y[i]))
        extend_mondrian_block(tree, tree.root, pid, use_pausing, _skip_new_parent=_skip_new_parent)
    return tree


def _structure(tree: MondrianTree) -> tuple[int, int, float]:
    num_leaves, _, max_depth = tree_stats(tree)
    root = tree.root
    return num_leaves, max_depth, tree.tau[root]


def _ks_report(a: np.ndarray, b: np.ndarray, labels=("a", "b")) -> dict:
    rows = {}
    passed = True
    for k, name in enumerate(TREE_STATISTICS):
        x, z = a[:, k], b[:, k]
        if np.all(np.isinf(x)) and np.all(np.isinf(z)):
            stat, p = 0.0, 1.0
        else:
            # a single-leaf root has tau = inf; map it above every finite time
            finite_max = np.nanmax(np.where(np.isinf(np.r_[x, z]), np.nan, np.r_[x, z])) \
                if np.isfinite(np.r_[x, z]).any() else 0.0
            x = np.where(np.isinf(x), finite_max + 1.0, x)
            z = np.where(np.isinf(z), finite_max + 1.0, z)
            res = stats.ks_2samp(x, z)
            stat, p = float(res.statistic), float(res.pvalue)
        ok = p > KS_ALPHA
        passed &= ok
        rows[name] = {
            "ks_statistic": stat, "p_value": p, "pass": ok,
            f"mean_{labels[0]}": float(np.mean(a[:, k])),
            f"mean_{labels[1]}": float(np.mean(b[:, k])),
        }
    return {"statistics": rows, "pass": bool(passed)}


def equivalence_test(num_points: int = 50, num_seeds: int = 2000, lifetime: float = math.inf,
                     data_seed: int = 12345, base_seed: int = 0, num_features: int = 2,
                     use_pausing: bool = False, mutate: bool = False) -> dict:
    """Compare online and batch tree-shape distributions with KS tests.

    The data set is fixed; only the tree randomness varies across seeds.
    ``mutate`` runs the online side with new-parent insertion disabled,
    which the test must detect.
    """
    if num_points > 50:
        raise ValueError("the equivalence harness is meant for N <= 50")
    X, y = synthetic_classification(num_points, num_features, data_seed)
    batch, online = [], []
    for s in range(num_seeds):
        seed = base_seed + s
        t_b = sample_mondrian_tree(X, y, 2, lifetime=lifetime, rng=RngStream(seed, 0),
                                   use_pausing=use_pausing)
        t_o = grow_online(X, y, 2, lifetime, RngStream(seed, 1), use_pausing,
                          _skip_new_parent=mutate)
        batch.append(_structure(t_b))
        online.append(_structure(t_o))
    report = _ks_report(np.array(batch, dtype=float), np.array(online, dtype=float),
                        ("batch", "online"))
    report.update(_header(num_points, num_seeds, lifetime, mutate))
    return report


def order_invariance_test(num_points: int = 50, num_seeds: int = 2000, lifetime: float = math.inf,
                          data_seed: int = 12345, base_seed: int = 0,
                          num_features: int = 2, use_pausing: bool = False) -> dict:
    """Same KS comparison between two fixed random insertion orders."""
    X, y = synthetic_classification(num_points, num_features, data_seed)
    perm = np.random.default_rng(data_seed + 1)
    order_a, order_b = perm.permutation(num_points), perm.permutation(num_points)
    first, second = [], []
    for s in range(num_seeds):
        seed = base_seed + s
        first.append(_structure(grow_online(X, y, 2, lifetime, RngStream(seed, 2), use_pausing,
                                                order=order_a)))
        second.append(_structure(grow_online(X, y, 2, lifetime, RngStream(seed, 3), use_pausing,
                                                 order=order_b)))
    report = _ks_report(np.array(first, dtype=float), np.array(second, dtype=float),
                        ("order_a", "order_b"))
    report.update(_header(num_points, num_seeds, lifetime, False))
    return report


def _header(num_points, num_seeds, lifetime, mutate):
    warnings = []
    if num_seeds < 2:
        warnings.append("insufficient samples: KS test needs at least 2 seeds per mode")
    return {"num_points": num_points, "num_seeds": num_seeds, "lifetime": lifetime,
            "mutated": mutate, "alpha": KS_ALPHA, "warnings": warnings}


# -- depth ----------------------------------------------------------------

def depth_stats(train: Dataset, config: ForestConfig, n_jobs: int = 1) -> dict:
    forest = MondrianForest(config, n_jobs=n_jobs).fit(train.features, train.labels)
    depths = np.array([s[1] for s in forest.tree_stats()])
    return {
        "num_points": train.num_points,
        "log2_num_points": math.log2(train.num_points),
        "mean_depth": float(depths.mean()),
        "std_depth": float(depths.std(ddof=1)) if len(depths) > 1 else 0.0,
        "num_trees": len(depths),
    }


def depth_scaling(sizes=(500, 1000, 2000, 4000, 8000), num_features: int = 2,
                  num_trees: int = 10, seed: int = 0, use_pausing: bool = True) -> dict:
    """Regress mean weighted depth on ``log2(N)`` for synthetic data."""
    rows = []
    for n in sizes:
        X, y = synthetic_classification(n, num_features, seed + n)
        cfg = ForestConfig(2, num_features, num_trees=num_trees, seed=seed, use_pausing=use_pausing)
        ds = Dataset(X, y)
        rows.append(depth_stats(ds, cfg))
    logn = np.array([r["log2_num_points"] for r in rows])
    depth = np.array([r["mean_depth"] for r in rows])
    fit = stats.linregress(logn, depth)
    return {"rows": rows, "slope": float(fit.slope), "intercept": float(fit.intercept),
            "r_squared": float(fit.rvalue ** 2)}


# -- analytic vs Monte-Carlo prediction ------------------------------------

@dataclass
class MCFixture:
    tree: MondrianTree
    params: PosteriorParams
    point: np.ndarray
    interior: bool
    info: dict = field(default_factory=dict)


def random_fixture(rng: np.random.Generator, interior: bool) -> MCFixture:
    """A random small tree plus a test point inside or outside its leaf box."""
    n = int(rng.integers(3, 30))
    d = int(rng.integers(1, 4))
    k = int(rng.integers(2, 4))
    lifetime = math.inf if rng.random() < 0.5 else float(rng.uniform(0.5, 6.0))
    pausing = bool(rng.random() < 0.5)
    X = rng.random((n, d))
    y = rng.integers(0, k, size=n)
    seed = int(rng.integers(0, 2**31))
    tree = grow_online(X, y, k, lifetime, RngStream(seed, 0), use_pausing=pausing)
    gamma = float(rng.uniform(0.5, 10.0)) * d
    params = PosteriorParams(gamma, k)
    if interior:
        x = X[int(rng.integers(0, n))].copy()
    else:
        while True:
            x = rng.uniform(-0.5, 1.5, size=d)
            leaf = tree.path_to_leaf(x)[-1]
            if (x < tree.lower[leaf]).any() or (x > tree.upper[leaf]).any():
                break
    info = {"num_points": n, "num_features": d, "num_classes": k, "lifetime": lifetime,
            "pausing": pausing, "gamma": gamma}
    return MCFixture(tree, params, x, interior, info)


def mc_check(num_fixtures: int = 20, num_samples: int = 100_000, seed: int = 0,
             tolerance: float = 0.01) -> dict:
    """Compare analytic and sampled predictions on random fixtures."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(num_fixtures):
        for interior in (False, True):
            fx = random_fixture(rng, interior)
            analytic = predict_tree(fx.tree, fx.params, fx.point)
            sampled = predict_tree_mc_oracle(fx.tree, fx.params, fx.point, num_samples,
                                             RngStream(seed, 1000 + 2 * i + interior))
            dev = float(np.max(np.abs(analytic - sampled)))
            ok = dev == 0.0 if interior else dev < tolerance
            rows.append({
                "fixture": i, "interior": interior, "max_abs_deviation": dev, "pass": ok,
                "analytic": analytic.tolist(), "monte_carlo": sampled.tolist(),
                "path": prediction_diagnostics(fx.tree, fx.point), **fx.info,
            })
    exterior = [r["max_abs_deviation"] for r in rows if not r["interior"]]
    interior = [r["max_abs_deviation"] for r in rows if r["interior"]]
    return {
        "num_fixtures": num_fixtures, "num_samples": num_samples, "tolerance": tolerance,
        "max_exterior_deviation": max(exterior) if exterior else 0.0,
        "max_interior_deviation": max(interior) if interior else 0.0,
        "fixtures": rows,
        "pass": all(r["pass"] for r in rows),
    }
