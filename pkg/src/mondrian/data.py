"""Dataset loading, min-max rescaling and mini-batch slicing.

Two input formats are understood:

* CSV: comma separated, label in the first column, optionally one header
  line to skip.
* LIBSVM: ``label index:value ...`` with 1-based feature indices; absent
  features are 0.

Labels are remapped to ``0..K-1`` in sorted order of the raw label values
(numeric order when every label parses as a number).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "DataFormatError",
    "Scaling",
    "Dataset",
    "load_dataset",
    "load_train_test",
    "build_label_map",
    "fit_scaling",
    "apply_scaling",
    "make_minibatches",
    "save_csv",
    "write_run_metadata",
]


class DataFormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Scaling:
    minimum: np.ndarray
    range: np.ndarray

    def to_dict(self) -> dict:
        return {"min": [repr(float(v)) for v in self.minimum],
                "range": [repr(float(v)) for v in self.range]}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaling":
        return cls(np.array([float(v) for v in d["min"]]), np.array([float(v) for v in d["range"]]))


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    label_map: dict = field(default_factory=dict)
    raw_labels: tuple | None = None
    scaling: Scaling | None = None

    @property
    def num_points(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        if self.label_map:
            return len(self.label_map)
        return int(self.labels.max()) + 1

    def subset(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx],
                       raw_labels=None)


def _parse_float(tok: str, path, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise DataFormatError(f"cannot parse {tok!r} as a number", path, lineno) from None
    if not math.isfinite(v):
        raise DataFormatError(f"non-finite value {tok!r}", path, lineno)
    return v


def _read_csv(path, skip_header: bool):
    labels, rows = [], []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if skip_header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) < 2:
                raise DataFormatError("expected a label and at least one feature", path, lineno)
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DataFormatError(f"expected {width} columns, found {len(parts)}", path, lineno)
            labels.append(parts[0])
            rows.append([_parse_float(p, path, lineno) for p in parts[1:]])
    return labels, rows, width - 1 if width else 0


def _read_libsvm(path, num_features: int | None):
    labels, entries = [], []
    max_index = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            labels.append(parts[0])
            row = {}
            for tok in parts[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise DataFormatError(f"expected index:value, found {tok!r}", path, lineno)
                try:
                    idx = int(idx_s)
                except ValueError:
                    raise DataFormatError(f"bad feature index {idx_s!r}", path, lineno) from None
                if idx < 1:
                    raise DataFormatError("feature indices are 1-based", path, lineno)
                row[idx - 1] = _parse_float(val_s, path, lineno)
                max_index = max(max_index, idx)
            entries.append(row)
    if num_features is None:
        num_features = max_index
    elif max_index > num_features:
        raise DataFormatError(f"feature index {max_index} exceeds num_features={num_features}", path)
    rows = []
    for row in entries:
        dense = [0.0] * num_features
        for k, v in row.items():
            dense[k] = v
        rows.append(dense)
    return labels, rows, num_features


def build_label_map(raw_labels) -> dict:
    """Map raw label strings to ``0..K-1`` in sorted order."""
    uniq = set(raw_labels)
    try:
        ordered = sorted(uniq, key=float)
    except ValueError:
        ordered = sorted(uniq)
    return {lab: k for k, lab in enumerate(ordered)}


def _normalize_label(tok: str) -> str:
    # "1", "1.0" and "+1" denote the same class
    try:
        v = float(tok)
    except ValueError:
        return tok
    return repr(int(v)) if v.is_integer() else repr(v)


def _read(path, format, skip_header, num_features):
    if format == "csv":
        raw, rows, width = _read_csv(path, skip_header)
        if num_features is not None and rows and width != num_features:
            raise DataFormatError(f"expected {num_features} features, found {width}", path)
    elif format == "libsvm":
        raw, rows, width = _read_libsvm(path, num_features)
    else:
        raise ValueError(f"unknown format {format!r}")
    if not rows:
        raise DataFormatError("file contains no data", path)
    return [_normalize_label(t) for t in raw], rows, width


def _build(path, raw, rows, width, label_map) -> Dataset:
    try:
        labels = np.array([label_map[t] for t in raw], dtype=np.int64)
    except KeyError as exc:
        raise DataFormatError(f"label {exc.args[0]!r} not in label map", path) from None
    features = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    return Dataset(features, labels, dict(label_map), tuple(raw))


def load_dataset(
    path,
    format: str = "csv",
    label_map: dict | None = None,
    skip_header: bool = False,
    num_features: int | None = None,
) -> Dataset:
    """Read a raw (unscaled) dataset.

    ``label_map`` fixes the raw-label to class-index mapping, e.g. to share
    it between train and test splits; by default it is built from this file.
    """
    raw, rows, width = _read(path, format, skip_header, num_features)
    if label_map is None:
        label_map = build_label_map(raw)
    return _build(path, raw, rows, width, label_map)


def load_train_test(train_path, test_path, format="csv", skip_header=False):
    """Load both splits with a label map built over the union of their labels."""
    train_raw, train_rows, d = _read(train_path, format, skip_header, None)
    test_raw, test_rows, d_test = _read(
        test_path, format, skip_header, d if format == "libsvm" else None)
    if d_test != d:
        raise DataFormatError(f"train has {d} features but test has {d_test}", test_path)
    label_map = build_label_map(train_raw + test_raw)
    return (_build(train_path, train_raw, train_rows, d, label_map),
            _build(test_path, test_raw, test_rows, d, label_map))


def fit_scaling(train: Dataset) -> Scaling:
    lo = train.features.min(axis=0)
    hi = train.features.max(axis=0)
    return Scaling(lo, hi - lo)


def apply_scaling(scaling: Scaling, data: Dataset) -> Dataset:
    """``(x - min) / range`` per feature; constant features map to 0.

    Values outside the training range are not clipped.
    """
    rng = scaling.range
    safe = np.where(rng > 0, rng, 1.0)
    scaled = np.where(rng > 0, (data.features - scaling.minimum) / safe, 0.0)
    return replace(data, features=scaled, scaling=scaling)


def make_minibatches(num_points: int, num_batches: int, shuffle_seed: int | None = 0) -> list[np.ndarray]:
    """Split ``range(num_points)`` into ``num_batches`` near-equal chunks.

    With a ``shuffle_seed`` the indices are permuted first; ``None`` keeps
    file order.  Earlier chunks are the larger ones.
    """
    if num_batches < 1:
        raise ValueError("num_batches must be >= 1")
    if num_batches > num_points:
        raise ValueError(f"cannot split {num_points} points into {num_batches} batches")
    order = np.arange(num_points)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(num_points)
    return [chunk for chunk in np.array_split(order, num_batches)]


def save_csv(data: Dataset, path) -> None:
    """Write label-first CSV with round-trippable float formatting."""
    inverse = {v: k for k, v in data.label_map.items()} if data.label_map else None
    with open(path, "w", encoding="utf-8") as fh:
        for lab, row in zip(data.labels, data.features):
            name = inverse[int(lab)] if inverse else str(int(lab))
            fh.write(",".join([name] + [repr(float(v)) for v in row]) + "\n")


def write_run_metadata(path, scaling: Scaling | None, label_map: dict, extra: dict | None = None) -> None:
    meta = {
        "scaling": scaling.to_dict() if scaling is not None else None,
        "label_map": {str(k): int(v) for k, v in label_map.items()},
    }
    if extra:
        meta.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
