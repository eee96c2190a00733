"""Ensembles of independent Mondrian trees."""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed

from ._codec import float_from_json, float_to_json
from .posterior import PosteriorParams
from .prediction import predict_tree_batch
from .rand import RngStream
from .tree import MondrianTree, PointStore, extend_mondrian_block, sample_mondrian_tree, tree_stats

__all__ = ["ForestConfig", "MondrianForest", "NotFittedError", "FOREST_FORMAT_VERSION"]

FOREST_FORMAT_VERSION = 1
_FORMAT_NAME = "mondrian-forest"


class NotFittedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    num_classes: int
    num_features: int
    num_trees: int = 100
    lifetime: float = math.inf
    gamma_multiplier: float = 10.0
    seed: int = 0
    use_pausing: bool = True

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if not self.lifetime >= 0:
            raise ValueError("lifetime must be non-negative")
        if not self.gamma_multiplier > 0:
            raise ValueError("gamma_multiplier must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def gamma(self) -> float:
        """Discount time-scale: the multiplier times the input dimension."""
        return self.gamma_multiplier * self.num_features

    @property
    def posterior_params(self) -> PosteriorParams:
        return PosteriorParams(self.gamma, self.num_classes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lifetime"] = float_to_json(self.lifetime)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ForestConfig":
        d = dict(d)
        d["lifetime"] = float_from_json(d["lifetime"])
        return cls(**d)


def _grow_trees(trees, store, point_ids, config, first_fit):
    """Worker body: sample (``first_fit``) or extend the given trees."""
    out = []
    for idx, tree in trees:
        if first_fit:
            tree = sample_mondrian_tree(
                None, None, config.num_classes,
                lifetime=config.lifetime,
                rng=RngStream(config.seed, idx),
                use_pausing=config.use_pausing,
                store=store,
                point_ids=point_ids,
            )
        else:
            tree.store = store
            for pid in point_ids:
                extend_mondrian_block(tree, tree.root, int(pid), config.use_pausing)
        out.append(tree)
    return out


class MondrianForest:
    """``num_trees`` Mondrian trees sharing one point store.

    ``n_jobs`` fans tree growth out over joblib workers; each tree owns its
    random stream, so the result is identical to serial training.
    """

    def __init__(self, config: ForestConfig, n_jobs: int = 1):
        self.config = config
        self.n_jobs = n_jobs
        self.trees: list[MondrianTree] = []
        self.store: PointStore | None = None

    @property
    def is_fitted(self) -> bool:
        return bool(self.trees)

    def _check_batch(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.config.num_features:
            raise ValueError(
                f"expected {self.config.num_features} features, got array of shape {X.shape}"
            )
        if y.shape != (X.shape[0],):
            raise ValueError("labels must be a vector with one entry per row")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        if y.size and (y.min() < 0 or y.max() >= self.config.num_classes):
            raise ValueError(f"labels must lie in 0..{self.config.num_classes - 1}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        return X, y

    def _run(self, point_ids, first_fit):
        indexed = list(enumerate(self.trees)) if not first_fit else [
            (i, None) for i in range(self.config.num_trees)
        ]
        if self.n_jobs == 1 or len(indexed) == 1:
            grown = _grow_trees(indexed, self.store, point_ids, self.config, first_fit)
        else:
            for _, t in indexed:
                if t is not None:
                    t.store = None
            n_chunks = min(len(indexed), abs(self.n_jobs) if self.n_jobs > 0 else len(indexed))
            chunks = [indexed[k::n_chunks] for k in range(n_chunks)]
            results = Parallel(n_jobs=self.n_jobs)(
                delayed(_grow_trees)(chunk, self.store, point_ids, self.config, first_fit)
                for chunk in chunks
            )
            grown = [None] * len(indexed)
            for k, chunk_result in enumerate(results):
                for pos, tree in zip(range(k, len(indexed), n_chunks), chunk_result):
                    grown[pos] = tree
        for tree in grown:
            tree.store = self.store
        self.trees = grown

    def fit(self, X, y) -> "MondrianForest":
        """Sample every tree from scratch on ``(X, y)``."""
        X, y = self._check_batch(X, y)
        if len(y) == 0:
            raise ValueError("cannot fit on an empty dataset")
        self.store = PointStore(self.config.num_features, capacity=len(y))
        ids = self.store.extend(X, y)
        self._run(ids, first_fit=True)
        return self

    def partial_fit(self, X, y) -> "MondrianForest":
        """Extend every tree with each row of ``(X, y)``, in order."""
        X, y = self._check_batch(X, y)
        if len(y) == 0:
            return self
        if not self.is_fitted:
            self.store = PointStore(self.config.num_features, capacity=max(64, len(y)))
            ids = self.store.extend(X, y)
            self._run(ids[:1], first_fit=True)
            ids = ids[1:]
        else:
            ids = self.store.extend(X, y)
        if len(ids):
            self._run(ids, first_fit=False)
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Average of the per-tree predictive distributions."""
        if not self.is_fitted:
            raise NotFittedError("forest has not been fitted")
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.config.num_features:
            raise ValueError(f"expected {self.config.num_features} features, got {X.shape[1]}")
        params = self.config.posterior_params
        total = np.zeros((X.shape[0], self.config.num_classes))
        for tree in self.trees:
            total += predict_tree_batch(tree, params, X)
        total /= len(self.trees)
        return total[0] if single else total

    def predict(self, X) -> np.ndarray:
        """Most probable class; ties go to the smallest class index."""
        proba = self.predict_proba(X)
        return np.argmax(proba, axis=-1)

    def tree_stats(self) -> list[tuple[int, float, int]]:
        if not self.is_fitted:
            raise NotFittedError("forest has not been fitted")
        return [tree_stats(t) for t in self.trees]

    # -- snapshots --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": _FORMAT_NAME,
            "version": FOREST_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "store": self.store.to_dict() if self.store is not None else None,
            "trees": [t.to_dict(include_store=False) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict, n_jobs: int = 1) -> "MondrianForest":
        if obj.get("format") != _FORMAT_NAME or obj.get("version") != FOREST_FORMAT_VERSION:
            raise ValueError("not a supported Mondrian forest snapshot")
        forest = cls(ForestConfig.from_dict(obj["config"]), n_jobs=n_jobs)
        if obj["store"] is not None:
            forest.store = PointStore.from_dict(obj["store"])
            forest.trees = [MondrianTree.from_dict(t, store=forest.store) for t in obj["trees"]]
        return forest

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes, n_jobs: int = 1) -> "MondrianForest":
        return cls.from_dict(json.loads(data.decode("utf-8")), n_jobs=n_jobs)

    def save(self, path) -> None:
        """Write a snapshot; paths ending in ``.gz`` are gzip-compressed."""
        data = self.to_bytes()
        path = str(path)
        if path.endswith(".gz"):
            with open(path, "wb") as fh, gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(data)
        else:
            with open(path, "wb") as fh:
                fh.write(data)

    @classmethod
    def load(cls, path, n_jobs: int = 1) -> "MondrianForest":
        path = str(path)
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "rb") as fh:
            return cls.from_bytes(fh.read(), n_jobs=n_jobs)
