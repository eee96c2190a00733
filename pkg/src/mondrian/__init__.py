"""Mondrian forests: online random forests whose trees, grown one point at
a time, have the same distribution as trees grown on the whole batch."""

from .data import Dataset, DataFormatError, apply_scaling, fit_scaling, load_dataset, load_train_test
from .forest import ForestConfig, MondrianForest, NotFittedError
from .posterior import PosteriorParams, posterior_mean
from .prediction import predict_tree, predict_tree_batch, predict_tree_mc_oracle
from .rand import RngStream
from .tree import (
    MondrianTree,
    PointStore,
    extend_mondrian_block,
    extend_mondrian_tree,
    sample_mondrian_block,
    sample_mondrian_tree,
    tree_stats,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DataFormatError",
    "ForestConfig",
    "MondrianForest",
    "MondrianTree",
    "NotFittedError",
    "PointStore",
    "PosteriorParams",
    "RngStream",
    "apply_scaling",
    "extend_mondrian_block",
    "extend_mondrian_tree",
    "fit_scaling",
    "load_dataset",
    "load_train_test",
    "posterior_mean",
    "predict_tree",
    "predict_tree_batch",
    "predict_tree_mc_oracle",
    "sample_mondrian_block",
    "sample_mondrian_tree",
    "tree_stats",
]
