"""Mondrian trees: batch sampling, online extension, routing and snapshots.

A tree is an arena of nodes addressed by dense integer ids.  Scalar node
fields (links, split, split time, pause flag, point ids) are Python lists;
the per-node data extents and label counts are rows of 2-D numpy arrays
that grow by doubling.  Node ids are never recycled: un-pausing a leaf
re-grows a subtree under the same id, and inserting a parent above a node
only rewires links.

Training points live in a :class:`PointStore` which several trees may
share; leaves keep the ids of the points they hold.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from ._codec import decode_array, encode_array, float_from_json, float_to_json
from .posterior import initialize_posterior_counts, update_posterior_counts
from .rand import (
    RngStream,
    sample_categorical_proportional,
    sample_exponential,
    sample_uniform_interval,
)

__all__ = [
    "PointStore",
    "MondrianTree",
    "sample_mondrian_tree",
    "sample_mondrian_block",
    "extend_mondrian_tree",
    "extend_mondrian_block",
    "route_to_leaf",
    "tree_stats",
    "TREE_FORMAT_VERSION",
]

TREE_FORMAT_VERSION = 1
_NONE = -1
_maximum = np.maximum
_minimum = np.minimum
_max_reduce = np.maximum.reduce
_add_reduce = np.add.reduce


class PointStore:
    """Append-only storage of training features and integer labels."""

    def __init__(self, num_features: int, capacity: int = 64):
        if num_features < 1:
            raise ValueError("num_features must be >= 1")
        self.num_features = num_features
        self.X = np.empty((max(capacity, 1), num_features), dtype=np.float64)
        self.y = np.empty(max(capacity, 1), dtype=np.int64)
        self.n = 0

    def _reserve(self, extra: int) -> None:
        need = self.n + extra
        if need <= len(self.y):
            return
        cap = max(need, 2 * len(self.y))
        X = np.empty((cap, self.num_features), dtype=np.float64)
        y = np.empty(cap, dtype=np.int64)
        X[: self.n] = self.X[: self.n]
        y[: self.n] = self.y[: self.n]
        self.X, self.y = X, y

    def append(self, x, label: int) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.num_features,):
            raise ValueError(f"expected {self.num_features} features, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        self._reserve(1)
        self.X[self.n] = x
        self.y[self.n] = label
        self.n += 1
        return self.n - 1

    def extend(self, X, y) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise ValueError(f"expected an (n, {self.num_features}) feature matrix, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must be a vector matching the rows of X")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        self._reserve(len(y))
        ids = np.arange(self.n, self.n + len(y))
        self.X[ids] = X
        self.y[ids] = y
        self.n += len(y)
        return ids

    @property
    def features(self) -> np.ndarray:
        return self.X[: self.n]

    @property
    def labels(self) -> np.ndarray:
        return self.y[: self.n]

    def to_dict(self) -> dict:
        return {
            "num_features": self.num_features,
            "X": encode_array(self.features),
            "y": encode_array(self.labels),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PointStore":
        store = cls(obj["num_features"])
        X = decode_array(obj["X"])
        if len(X):
            store.extend(X, decode_array(obj["y"]))
        return store


class MondrianTree:
    """Node arena plus the state needed to keep growing the tree.

    Attributes mirror the per-node quantities of a Mondrian tree:
    ``split_dim``/``split_loc`` (internal nodes), ``tau`` (split time, the
    lifetime at leaves), ``lower``/``upper`` (bounding box of the training
    points routed through the node), ``paused`` and ``points`` (leaves
    only; ``points`` is ``None`` on internal nodes).
    """

    def __init__(
        self,
        num_features: int,
        num_classes: int,
        lifetime: float = math.inf,
        rng: RngStream | None = None,
        use_pausing: bool = False,
        store: PointStore | None = None,
    ):
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if not lifetime >= 0:
            raise ValueError("lifetime must be non-negative")
        self.num_features = num_features
        self.num_classes = num_classes
        self.lifetime = float(lifetime)
        self.rng = rng if rng is not None else RngStream()
        self.use_pausing = use_pausing
        self.store = store if store is not None else PointStore(num_features)
        if self.store.num_features != num_features:
            raise ValueError("store dimension does not match the tree")

        self.root = _NONE
        self.parent: list[int] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.split_dim: list[int] = []
        self.split_loc: list[float] = []
        self.tau: list[float] = []
        self.paused: list[bool] = []
        self.points: list[list[int] | None] = []
        cap = 16
        self.lower = np.zeros((cap, num_features))
        self.upper = np.zeros((cap, num_features))
        self.counts = np.zeros((cap, num_classes), dtype=np.int64)
        self.tables = np.zeros((cap, num_classes), dtype=np.int64)

    # -- arena ------------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self.parent)

    @property
    def num_points(self) -> int:
        return sum(len(self.points[j]) for j in self.leaves())

    def _new_node(self, parent: int) -> int:
        j = len(self.parent)
        if j == len(self.lower):
            cap = 2 * j
            for name in ("lower", "upper", "counts", "tables"):
                old = getattr(self, name)
                new = np.zeros((cap, old.shape[1]), dtype=old.dtype)
                new[:j] = old
                setattr(self, name, new)
        self.parent.append(parent)
        self.left.append(_NONE)
        self.right.append(_NONE)
        self.split_dim.append(_NONE)
        self.split_loc.append(math.nan)
        self.tau.append(self.lifetime)
        self.paused.append(False)
        self.points.append(None)
        self.counts[j] = 0
        self.tables[j] = 0
        return j

    def is_leaf(self, j: int) -> bool:
        return self.left[j] < 0

    def tau_parent(self, j: int) -> float:
        p = self.parent[j]
        return 0.0 if p < 0 else self.tau[p]

    def leaves(self):
        return [j for j in self.preorder() if self.left[j] < 0]

    def preorder(self):
        if self.root < 0:
            return
        stack = [self.root]
        while stack:
            j = stack.pop()
            yield j
            if self.left[j] >= 0:
                stack.append(self.right[j])
                stack.append(self.left[j])

    def postorder(self):
        """Children before parents."""
        order = []
        stack = [self.root] if self.root >= 0 else []
        while stack:
            j = stack.pop()
            order.append(j)
            if self.left[j] >= 0:
                stack.append(self.left[j])
                stack.append(self.right[j])
        return reversed(order)

    def depths(self) -> dict[int, int]:
        depth = {}
        queue = deque([(self.root, 0)]) if self.root >= 0 else deque()
        while queue:
            j, d = queue.popleft()
            depth[j] = d
            if self.left[j] >= 0:
                queue.append((self.left[j], d + 1))
                queue.append((self.right[j], d + 1))
        return depth

    def path_to_leaf(self, x) -> list[int]:
        """Root-first list of nodes visited while routing ``x``."""
        x = np.asarray(x, dtype=np.float64)
        j = self.root
        path = [j]
        left, right, dim, loc = self.left, self.right, self.split_dim, self.split_loc
        while left[j] >= 0:
            j = left[j] if x[dim[j]] <= loc[j] else right[j]
            path.append(j)
        return path

    # -- growth (thin wrappers) -------------------------------------------

    def extend(self, x, y: int) -> None:
        extend_mondrian_tree(self, (x, y))

    def copy(self) -> "MondrianTree":
        return MondrianTree.from_dict(self.to_dict())

    # -- snapshots --------------------------------------------------------

    def to_dict(self, include_store: bool = True) -> dict:
        n = self.num_nodes
        leaf_ids = [j for j in range(n) if self.points[j] is not None]
        offsets = np.cumsum([0] + [len(self.points[j]) for j in leaf_ids])
        flat = [p for j in leaf_ids for p in self.points[j]]
        obj = {
            "version": TREE_FORMAT_VERSION,
            "num_features": self.num_features,
            "num_classes": self.num_classes,
            "lifetime": float_to_json(self.lifetime),
            "use_pausing": self.use_pausing,
            "root": self.root,
            "rng": self.rng.get_state(),
            "parent": encode_array(np.asarray(self.parent, dtype=np.int64)),
            "left": encode_array(np.asarray(self.left, dtype=np.int64)),
            "right": encode_array(np.asarray(self.right, dtype=np.int64)),
            "split_dim": encode_array(np.asarray(self.split_dim, dtype=np.int64)),
            "split_loc": encode_array(np.asarray(self.split_loc, dtype=np.float64)),
            "tau": encode_array(np.asarray(self.tau, dtype=np.float64)),
            "paused": encode_array(np.asarray(self.paused, dtype=np.uint8)),
            "lower": encode_array(self.lower[:n]),
            "upper": encode_array(self.upper[:n]),
            "counts": encode_array(self.counts[:n]),
            "tables": encode_array(self.tables[:n]),
            "leaf_ids": encode_array(np.asarray(leaf_ids, dtype=np.int64)),
            "leaf_offsets": encode_array(np.asarray(offsets, dtype=np.int64)),
            "leaf_points": encode_array(np.asarray(flat, dtype=np.int64)),
        }
        if include_store:
            obj["store"] = self.store.to_dict()
        return obj

    @classmethod
    def from_dict(cls, obj: dict, store: PointStore | None = None) -> "MondrianTree":
        if obj.get("version") != TREE_FORMAT_VERSION:
            raise ValueError(f"unsupported tree snapshot version {obj.get('version')!r}")
        if store is None:
            store = PointStore.from_dict(obj["store"])
        tree = cls(
            obj["num_features"],
            obj["num_classes"],
            lifetime=float_from_json(obj["lifetime"]),
            rng=RngStream.from_state(obj["rng"]),
            use_pausing=obj["use_pausing"],
            store=store,
        )
        tree.parent = decode_array(obj["parent"]).tolist()
        tree.left = decode_array(obj["left"]).tolist()
        tree.right = decode_array(obj["right"]).tolist()
        tree.split_dim = decode_array(obj["split_dim"]).tolist()
        tree.split_loc = decode_array(obj["split_loc"]).tolist()
        tree.tau = decode_array(obj["tau"]).tolist()
        tree.paused = [bool(v) for v in decode_array(obj["paused"])]
        n = len(tree.parent)
        cap = max(16, n)
        for name in ("lower", "upper", "counts", "tables"):
            data = decode_array(obj[name])
            buf = np.zeros((cap, data.shape[1]), dtype=getattr(tree, name).dtype)
            buf[:n] = data
            setattr(tree, name, buf)
        tree.points = [None] * n
        leaf_ids = decode_array(obj["leaf_ids"]).tolist()
        offsets = decode_array(obj["leaf_offsets"]).tolist()
        flat = decode_array(obj["leaf_points"]).tolist()
        for i, j in enumerate(leaf_ids):
            tree.points[j] = flat[offsets[i]: offsets[i + 1]]
        tree.root = obj["root"]
        return tree


def sample_mondrian_tree(
    X,
    y,
    num_classes: int,
    lifetime: float = math.inf,
    rng: RngStream | None = None,
    use_pausing: bool = False,
    store: PointStore | None = None,
    point_ids=None,
) -> MondrianTree:
    """Sample a tree from the Mondrian tree distribution on ``(X, y)`` in one go.

    When ``store`` is given the points are assumed to already live in it and
    ``point_ids`` selects them; ``X`` and ``y`` are then ignored.
    """
    if store is None:
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("cannot sample a Mondrian tree from an empty dataset")
        _check_labels(y, num_classes)
        store = PointStore(X.shape[1], capacity=len(y))
        point_ids = store.extend(X, y)
    elif point_ids is None:
        point_ids = np.arange(store.n)
    point_ids = np.asarray(point_ids, dtype=np.int64)
    if point_ids.size == 0:
        raise ValueError("cannot sample a Mondrian tree from an empty dataset")
    tree = MondrianTree(
        store.num_features, num_classes, lifetime=lifetime, rng=rng,
        use_pausing=use_pausing, store=store,
    )
    tree.root = tree._new_node(_NONE)
    sample_mondrian_block(tree, tree.root, point_ids, use_pausing)
    return tree


def sample_mondrian_block(tree: MondrianTree, j: int, point_ids, use_pausing: bool | None = None) -> None:
    """Grow the subtree rooted at the unexpanded node ``j`` over ``point_ids``.

    Children are expanded depth-first, left before right, so the order in
    which randomness is consumed matches the recursive formulation.
    """
    if use_pausing is None:
        use_pausing = tree.use_pausing
    X, labels, rng, lifetime = tree.store.X, tree.store.y, tree.rng, tree.lifetime
    stack = [(j, np.asarray(point_ids, dtype=np.int64))]
    while stack:
        j, ids = stack.pop()
        if ids.size == 0:
            raise ValueError("sample_mondrian_block needs at least one point")
        Xj = X[ids]
        lo = Xj.min(axis=0)
        hi = Xj.max(axis=0)
        tree.lower[j] = lo
        tree.upper[j] = hi
        tree.left[j] = tree.right[j] = _NONE
        tree.paused[j] = False
        extent = hi - lo
        if use_pausing and _all_equal(labels[ids]):
            tau = lifetime
            tree.paused[j] = True
        else:
            tau = tree.tau_parent(j) + sample_exponential(rng, float(extent.sum()))
        if tau < lifetime:
            d = sample_categorical_proportional(rng, extent)
            xi = sample_uniform_interval(rng, lo[d], hi[d])
            if xi >= hi[d]:  # keep the right child non-empty under rounding
                xi = float(np.nextafter(hi[d], lo[d]))
            tree.tau[j] = tau
            tree.split_dim[j] = d
            tree.split_loc[j] = xi
            tree.points[j] = None
            go_left = Xj[:, d] <= xi
            left = tree._new_node(j)
            right = tree._new_node(j)
            tree.left[j] = left
            tree.right[j] = right
            stack.append((right, ids[~go_left]))
            stack.append((left, ids[go_left]))
        else:
            tree.tau[j] = lifetime
            tree.points[j] = ids.tolist()
            initialize_posterior_counts(tree, j)


def extend_mondrian_tree(tree: MondrianTree, point, use_pausing: bool | None = None) -> int:
    """Add one labelled point ``(x, y)`` to the tree; returns its point id."""
    x, y = point
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.num_features,):
        raise ValueError(f"expected {tree.num_features} features, got shape {x.shape}")
    _check_labels(np.asarray([y]), tree.num_classes)
    pid = tree.store.append(x, int(y))
    if tree.root < 0:
        tree.root = tree._new_node(_NONE)
        sample_mondrian_block(tree, tree.root, [pid], use_pausing)
    else:
        extend_mondrian_block(tree, tree.root, pid, use_pausing)
    return pid


def extend_mondrian_block(
    tree: MondrianTree,
    j: int,
    pid: int,
    use_pausing: bool | None = None,
    _skip_new_parent: bool = False,
) -> None:
    """Route stored point ``pid`` down from node ``j``, growing the tree.

    ``_skip_new_parent`` disables the insertion of new parents; it exists
    only so the equivalence harness can check that it detects a broken
    sampler.
    """
    if use_pausing is None:
        use_pausing = tree.use_pausing
    x = tree.store.X[pid]
    y = int(tree.store.y[pid])
    rng = tree.rng
    lower, upper = tree.lower, tree.upper
    while True:
        lo = lower[j]
        hi = upper[j]
        if use_pausing and tree.paused[j]:
            np.minimum(lo, x, out=lo)
            np.maximum(hi, x, out=hi)
            pts = tree.points[j]
            pts.append(pid)
            if y == tree.store.y[pts[0]]:
                update_posterior_counts(tree, j, y)
                return
            tree.paused[j] = False
            tree.points[j] = None
            sample_mondrian_block(tree, j, pts, use_pausing)
            return

        below = lo - x
        above = x - hi
        gap = _maximum(below, above)
        if _max_reduce(gap) > 0.0:
            if not _skip_new_parent:
                extra = _maximum(below, 0.0, out=below)
                extra += _maximum(above, 0.0, out=above)
                E = sample_exponential(rng, float(_add_reduce(extra)))
                tau_parent = tree.tau_parent(j)
                if tau_parent + E < tree.tau[j]:
                    _insert_parent(tree, j, pid, x, extra, tau_parent + E, use_pausing)
                    return
            _minimum(lo, x, out=lo)
            _maximum(hi, x, out=hi)
        if tree.left[j] < 0:
            tree.points[j].append(pid)
            update_posterior_counts(tree, j, y)
            return
        j = tree.left[j] if x[tree.split_dim[j]] <= tree.split_loc[j] else tree.right[j]


def _insert_parent(tree, j, pid, x, extra, tau_new, use_pausing):
    rng = tree.rng
    lo = tree.lower[j]
    hi = tree.upper[j]
    d = sample_categorical_proportional(rng, extra)
    if x[d] > hi[d]:
        xi = sample_uniform_interval(rng, hi[d], x[d])
        if xi >= x[d]:
            xi = float(np.nextafter(x[d], hi[d]))
    else:
        # unreachable unless x lies strictly below the box on dimension d
        assert x[d] < lo[d], "split dimension has no extra extent"
        xi = sample_uniform_interval(rng, x[d], lo[d])
        if xi >= lo[d]:
            xi = float(np.nextafter(lo[d], x[d]))

    p = tree._new_node(tree.parent[j])
    tree.split_dim[p] = d
    tree.split_loc[p] = xi
    tree.tau[p] = tau_new
    # re-read rows: _new_node may have reallocated the arrays
    np.minimum(tree.lower[j], x, out=tree.lower[p])
    np.maximum(tree.upper[j], x, out=tree.upper[p])
    old_parent = tree.parent[j]
    if old_parent < 0:
        tree.root = p
    elif tree.left[old_parent] == j:
        tree.left[old_parent] = p
    else:
        tree.right[old_parent] = p
    tree.parent[j] = p
    sibling = tree._new_node(p)
    if x[d] > xi:
        tree.left[p], tree.right[p] = j, sibling
    else:
        tree.left[p], tree.right[p] = sibling, j
    sample_mondrian_block(tree, sibling, [pid], use_pausing)


def route_to_leaf(tree: MondrianTree, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.num_features,):
        raise ValueError(f"expected {tree.num_features} features, got shape {x.shape}")
    return tree.path_to_leaf(x)[-1]


def tree_stats(tree: MondrianTree) -> tuple[int, float, int]:
    """``(num_leaves, data-weighted mean leaf depth, max leaf depth)``."""
    depth = tree.depths()
    leaves = [j for j in depth if tree.left[j] < 0]
    sizes = np.array([len(tree.points[j]) for j in leaves], dtype=np.float64)
    depths = np.array([depth[j] for j in leaves], dtype=np.float64)
    total = sizes.sum()
    if total == 0:
        raise ValueError("tree holds no training points")
    return len(leaves), float(sizes @ depths / total), int(depths.max())


def _all_equal(a: np.ndarray) -> bool:
    return bool((a == a[0]).all())


def _check_labels(y: np.ndarray, num_classes: int) -> None:
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(f"labels must lie in 0..{num_classes - 1}")
