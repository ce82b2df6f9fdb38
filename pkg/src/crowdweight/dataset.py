"""Multi-annotator datasets: LibSVM ingestion, CSV I/O, splitting and scaling.

The CSV layout is one row per example with header ``x1..xn,y_true,a1..aL``.
``y_true`` is left blank when the ground truth is unknown.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, UnsupportedDatasetError


@dataclass(frozen=True)
class MultiLabelDataset:
    features: np.ndarray
    annotator_labels: np.ndarray
    true_labels: Optional[np.ndarray] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        A = np.asarray(self.annotator_labels)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if A.ndim != 2:
            raise ValueError("annotator_labels must be a 2-D matrix")
        m, n = X.shape
        if m < 1 or n < 1:
            raise ValueError(f"need at least one example and one feature, got {X.shape}")
        if A.shape[0] != m or A.shape[1] < 1:
            raise ValueError(f"annotator_labels shape {A.shape} incompatible with {m} examples")
        if not np.all((A == 1) | (A == -1)):
            raise ValueError("annotator labels must be -1 or +1")
        A = A.astype(np.int8)
        y = self.true_labels
        if y is not None:
            y = np.asarray(y)
            if y.shape != (m,):
                raise ValueError(f"true_labels must have length {m}")
            if not np.all((y == 1) | (y == -1)):
                raise ValueError("true labels must be -1 or +1")
            y = y.astype(np.int8)
            y.setflags(write=False)
        if self.feature_names is not None and len(self.feature_names) != n:
            raise ValueError("feature_names length does not match feature count")
        X = X.copy()
        X.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "annotator_labels", A)
        object.__setattr__(self, "true_labels", y)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def num_examples(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_annotators(self) -> int:
        return self.annotator_labels.shape[1]

    def subset(self, idx) -> "MultiLabelDataset":
        idx = np.asarray(idx, dtype=int)
        return MultiLabelDataset(
            self.features[idx],
            self.annotator_labels[idx],
            None if self.true_labels is None else self.true_labels[idx],
            self.feature_names,
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.5
    fold_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")
        if self.fold_count < 1:
            raise ValueError("fold_count must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


# ---------------------------------------------------------------------------
# LibSVM

def _raw_lines(text):
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    elif hasattr(text, "read"):
        data = text.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    return text.splitlines()


def parse_libsvm(text) -> tuple[sp.csr_matrix, np.ndarray]:
    """Parse LibSVM text into a sparse feature matrix and ±1 labels.

    ``text`` may be ``str``, ``bytes`` or a readable file object.  Raw labels
    are mapped so that the smaller of the two distinct values becomes -1; a
    single-class file maps its only label by sign (``<= 0`` to -1).
    """
    rows, cols, vals, raw = [], [], [], []
    n_features = 0
    for lineno, line in enumerate(_raw_lines(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        if not np.isfinite(label):
            raise ParseError(f"bad label {tokens[0]!r}", lineno)
        last = 0
        r = len(raw)
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"expected <index>:<value>, got {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"bad feature token {tok!r}", lineno) from None
            if idx <= last:
                raise ParseError("feature indices must be 1-based and strictly increasing", lineno)
            last = idx
            if val != 0.0:
                rows.append(r)
                cols.append(idx - 1)
                vals.append(val)
        n_features = max(n_features, last)
        raw.append(label)
    if not raw:
        raise ParseError("no examples")
    distinct = sorted(set(raw))
    if len(distinct) > 2:
        raise UnsupportedDatasetError(
            f"expected a binary dataset, found {len(distinct)} distinct labels"
        )
    raw = np.asarray(raw)
    if len(distinct) == 2:
        labels = np.where(raw == distinct[0], -1, 1)
    else:
        labels = np.where(raw <= 0, -1, 1)
    X = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(raw), max(n_features, 1)), dtype=float
    )
    return X, labels.astype(np.int8)


def load_libsvm(path: Union[str, Path]) -> tuple[sp.csr_matrix, np.ndarray]:
    with open(path, "rb") as fh:
        return parse_libsvm(fh.read())


def to_libsvm(features, labels) -> str:
    """Serialize to LibSVM text; zero entries are omitted."""
    X = sp.csr_matrix(features)
    out = []
    for i in range(X.shape[0]):
        start, end = X.indptr[i], X.indptr[i + 1]
        order = np.argsort(X.indices[start:end])
        parts = [f"{int(labels[i]):+d}"]
        for j, v in zip(X.indices[start:end][order], X.data[start:end][order]):
            if v != 0.0:
                parts.append(f"{j + 1}:{float(v)!r}")
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# CSV

def write_csv(ds: MultiLabelDataset, path_or_buf) -> None:
    n, L = ds.num_features, ds.num_annotators
    header = [f"x{j + 1}" for j in range(n)] + ["y_true"] + [f"a{l + 1}" for l in range(L)]
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.num_examples):
            y = "" if ds.true_labels is None else str(int(ds.true_labels[i]))
            w.writerow(
                [repr(float(v)) for v in ds.features[i]]
                + [y]
                + [str(int(a)) for a in ds.annotator_labels[i]]
            )
    finally:
        if own:
            fh.close()


def read_csv(path_or_buf) -> MultiLabelDataset:
    if isinstance(path_or_buf, (str, Path)):
        with open(path_or_buf, newline="", encoding="utf-8") as fh:
            return read_csv(fh)
    if isinstance(path_or_buf, str):
        path_or_buf = io.StringIO(path_or_buf)
    reader = csv.reader(path_or_buf)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("no examples") from None
    if "y_true" not in header:
        raise ParseError("missing y_true column", 1)
    ycol = header.index("y_true")
    if ycol < 1 or ycol == len(header) - 1:
        raise ParseError("expected header x1..xn,y_true,a1..aL", 1)
    X, Y, A = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        try:
            X.append([float(v) for v in row[:ycol]])
            Y.append(row[ycol].strip())
            A.append([int(float(v)) for v in row[ycol + 1:]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if not X:
        raise ParseError("no examples")
    if all(y == "" for y in Y):
        y_true = None
    elif any(y == "" for y in Y):
        raise ParseError("y_true must be filled for all rows or none")
    else:
        y_true = np.array([int(float(y)) for y in Y])
    try:
        return MultiLabelDataset(np.array(X), np.array(A), y_true, tuple(header[:ycol]))
    except ValueError as exc:
        raise ParseError(str(exc)) from None


# ---------------------------------------------------------------------------
# splitting / scaling

def split_indices(m: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle ``range(m)`` and cut it at ``round(train_fraction * m)``."""
    n_train = int(round(spec.train_fraction * m))
    if n_train < 1 or n_train >= m:
        raise ValueError(
            f"train_fraction={spec.train_fraction} leaves an empty train or test set (m={m})"
        )
    if spec.fold_count > 1 and n_train < spec.fold_count:
        raise ValueError("training set smaller than the requested fold count")
    perm = np.random.default_rng(int(spec.seed)).permutation(m)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(ds: MultiLabelDataset, spec: SplitSpec) -> tuple[MultiLabelDataset, MultiLabelDataset]:
    train_idx, test_idx = split_indices(ds.num_examples, spec)
    return ds.subset(train_idx), ds.subset(test_idx)


def kfold_indices(m: int, k: int, seed=0) -> list[np.ndarray]:
    """Partition ``range(m)`` into ``k`` validation folds of near-equal size."""
    if k < 1:
        raise ValueError("k must be positive")
    if k > m:
        raise ValueError(f"cannot make {k} folds from {m} examples")
    perm = np.random.default_rng(seed).permutation(m)
    return [np.sort(f) for f in np.array_split(perm, k)]


def minmax_scale(X, lo=None, hi=None):
    """Scale each column to [-1, +1].  Constant columns map to 0.

    Pass ``lo``/``hi`` from the training set to transform held-out data.
    """
    X = np.asarray(X.toarray() if sp.issparse(X) else X, dtype=float)
    lo = X.min(axis=0) if lo is None else np.asarray(lo)
    hi = X.max(axis=0) if hi is None else np.asarray(hi)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (X - lo) / safe - 1.0
    out[:, span <= 0] = 0.0
    return out, lo, hi


def densify(X) -> np.ndarray:
    return np.asarray(X.toarray() if sp.issparse(X) else X, dtype=float)


def majority_vote(annotator_labels, tie=1) -> np.ndarray:
    """Row-wise majority of ±1 labels; exact ties resolve to ``tie``."""
    s = np.asarray(annotator_labels, dtype=float).sum(axis=1)
    return np.where(s > 0, 1, np.where(s < 0, -1, tie)).astype(np.int8)
