"""Tabular classification datasets: loading, stratified splits, CV folds and
min-max scaling.

All containers are immutable after construction so evaluation workers can
read them concurrently.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "DatasetError",
    "Dataset",
    "DatasetView",
    "MinMaxParams",
    "ManifestEntry",
    "load_dataset",
    "load_builtin",
    "resolve_dataset",
    "read_manifest",
    "split_train_test",
    "assign_folds",
    "normalize",
    "BUILTIN_DATASETS",
]

BUILTIN_DATASETS = {
    # name -> (file, label column)
    "wdbc": ("wdbc.csv", "last"),
    "sonar": ("sonar.csv", "last"),
    "ConnectionistBench": ("sonar.csv", "last"),
}


class DatasetError(ValueError):
    """Raised for malformed input files and unusable datasets."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric feature matrix with labels coded ``0..class_count-1``."""

    name: str
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DatasetError(f"{self.name}: features must be a 2-D matrix")
        if y.shape != (X.shape[0],):
            raise DatasetError(f"{self.name}: labels length {y.shape} != rows {X.shape[0]}")
        if X.shape[1] < 1:
            raise DatasetError(f"{self.name}: dataset has no feature columns")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DatasetError(f"{self.name}: non-finite value at row {r}, column {c}")
        classes = np.unique(y)
        if classes.size < 2:
            raise DatasetError(f"{self.name}: single-class dataset")
        if classes[0] != 0 or classes[-1] != classes.size - 1:
            raise DatasetError(f"{self.name}: labels must be contiguous 0..C-1")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        if not self.class_names:
            object.__setattr__(self, "class_names", tuple(str(c) for c in classes))
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"f{j}" for j in range(X.shape[1])))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return int(self.labels.max()) + 1

    def view(self, rows: Optional[Sequence[int]] = None) -> "DatasetView":
        if rows is None:
            rows = np.arange(self.n)
        return DatasetView(self, rows)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.name == other.name
            and self.class_names == other.class_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True, eq=False)
class DatasetView:
    """An ordered subset of rows of a :class:`Dataset`, optionally carrying
    a fold id per row."""

    source: Dataset
    row_indices: np.ndarray
    fold_assignment: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = np.array(self.row_indices, dtype=np.int64).ravel()
        if rows.size and (rows.min() < 0 or rows.max() >= self.source.n):
            raise DatasetError("row index out of range")
        if np.unique(rows).size != rows.size:
            raise DatasetError("row indices must be distinct")
        object.__setattr__(self, "row_indices", _frozen(rows))
        if self.fold_assignment is not None:
            folds = np.array(self.fold_assignment, dtype=np.int64).ravel()
            if folds.shape != rows.shape:
                raise DatasetError("fold assignment length differs from row count")
            k = int(folds.max()) + 1 if folds.size else 0
            if folds.min() < 0 or np.unique(folds).size != k:
                raise DatasetError("fold ids must cover 0..folds-1 with no empty fold")
            object.__setattr__(self, "fold_assignment", _frozen(folds))

    def __len__(self) -> int:
        return self.row_indices.size

    @property
    def X(self) -> np.ndarray:
        return self.source.features[self.row_indices]

    @property
    def y(self) -> np.ndarray:
        return self.source.labels[self.row_indices]

    @property
    def D(self) -> int:
        return self.source.D

    @property
    def class_count(self) -> int:
        return self.source.class_count

    @property
    def folds(self) -> int:
        if self.fold_assignment is None:
            return 0
        return int(self.fold_assignment.max()) + 1

    def with_source(self, source: Dataset) -> "DatasetView":
        return DatasetView(source, self.row_indices, self.fold_assignment)


# --------------------------------------------------------------------------
# loading


def _parse_float(cell: str, row: int, col: int, path) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DatasetError(
            f"{path}: non-numeric feature cell {cell!r} at row {row}, column {col}"
        ) from None
    if not math.isfinite(v):
        raise DatasetError(f"{path}: non-finite feature cell {cell!r} at row {row}, column {col}")
    return v


def load_dataset(
    path: Union[str, os.PathLike],
    label_column: Union[str, int] = "last",
    name: Optional[str] = None,
) -> Dataset:
    """Read a CSV file with a header row into a :class:`Dataset`.

    ``label_column`` is ``"first"``, ``"last"``, a header name or a column
    index. Labels are re-coded to ``0..C-1`` in order of first appearance.
    Row numbers in error messages are 1-based data rows (header excluded).
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]

    width = len(header)
    if label_column == "first":
        li = 0
    elif label_column == "last":
        li = width - 1
    elif isinstance(label_column, int):
        li = label_column
    elif label_column in header:
        li = header.index(label_column)
    else:
        raise DatasetError(f"{path}: label column {label_column!r} not in header")
    if not 0 <= li < width or width < 2:
        raise DatasetError(f"{path}: bad label column {label_column!r} for {width} columns")

    codes: dict = {}
    X = np.empty((len(rows), width - 1))
    y = np.empty(len(rows), dtype=np.int64)
    for r, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DatasetError(f"{path}: row {r} has {len(row)} columns, expected {width}")
        lab = row[li].strip()
        if lab == "":
            raise DatasetError(f"{path}: missing label at row {r}, column {li}")
        y[r - 1] = codes.setdefault(lab, len(codes))
        c_out = 0
        for c, cell in enumerate(row):
            if c == li:
                continue
            X[r - 1, c_out] = _parse_float(cell.strip(), r, c, path)
            c_out += 1
    if len(codes) < 2:
        raise DatasetError(f"{path}: single-class dataset")
    feature_names = tuple(h for i, h in enumerate(header) if i != li)
    return Dataset(
        name=name or path.stem,
        features=X,
        labels=y,
        class_names=tuple(codes),
        feature_names=feature_names,
    )


def load_builtin(name: str) -> Dataset:
    """Load one of the bundled benchmark datasets (``wdbc``, ``sonar``)."""
    try:
        fname, label = BUILTIN_DATASETS[name]
    except KeyError:
        raise DatasetError(
            f"unknown builtin dataset {name!r}; choose from {sorted(BUILTIN_DATASETS)}"
        ) from None
    with resources.as_file(resources.files("sawde.data") / fname) as p:
        return load_dataset(p, label, name=name)


def resolve_dataset(path: str, label_column="last", name=None) -> Dataset:
    """``builtin:<name>`` or a CSV path."""
    if str(path).startswith("builtin:"):
        ds = load_builtin(str(path).split(":", 1)[1])
        return ds if name is None else Dataset(name, ds.features, ds.labels, ds.class_names, ds.feature_names)
    return load_dataset(path, label_column, name=name)


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    path: str
    label_column: str = "last"


def read_manifest(path: Union[str, os.PathLike]) -> list[ManifestEntry]:
    """Parse a dataset manifest: one ``name, path[, label-column]`` per line.

    Blank lines and ``#`` comments are ignored; relative paths resolve
    against the manifest's directory.
    """
    path = Path(path)
    entries = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in row]
            if len(cells) not in (2, 3):
                raise DatasetError(f"{path}: line {lineno}: expected 'name, path[, label-column]'")
            p = cells[1]
            if not p.startswith("builtin:") and not os.path.isabs(p):
                p = str(path.parent / p)
            entries.append(ManifestEntry(cells[0], p, cells[2] if len(cells) == 3 else "last"))
    return entries


# --------------------------------------------------------------------------
# partitioning


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_train_test(ds: Dataset, train_fraction: float = 0.7, seed: int = 0):
    """Stratified random train/test split.

    The total training size is ``round(train_fraction * n)``; each class gets
    ``floor(train_fraction * class_size)`` rows plus one extra for the classes
    with the largest remainders (lower class id first) until the total is met.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError("train_fraction must lie in (0, 1)")
    if train_fraction * ds.n < ds.class_count:
        raise DatasetError("train_fraction * n must be at least the number of classes")
    rng = np.random.default_rng(seed)
    sizes = np.bincount(ds.labels, minlength=ds.class_count)
    exact = train_fraction * sizes
    quota = np.floor(exact).astype(int)
    extra = _round_half_up(train_fraction * ds.n) - quota.sum()
    order = sorted(range(ds.class_count), key=lambda c: (-(exact[c] - quota[c]), c))
    for c in order[: max(extra, 0)]:
        quota[c] += 1
    if np.any(quota == 0):
        c = int(np.flatnonzero(quota == 0)[0])
        raise DatasetError(f"train_fraction leaves class {ds.class_names[c]!r} empty in train")

    train, test = [], []
    for c in range(ds.class_count):
        members = rng.permutation(np.flatnonzero(ds.labels == c))
        train.append(members[: quota[c]])
        test.append(members[quota[c]:])
    train = np.sort(np.concatenate(train))
    test = np.sort(np.concatenate(test))
    return DatasetView(ds, train), DatasetView(ds, test)


def assign_folds(view: DatasetView, folds: int = 3, seed: int = 0) -> DatasetView:
    """Stratified fold ids for ``view``.

    Rows are shuffled within each class, concatenated class by class and dealt
    round-robin, so fold sizes differ by at most one and classes smaller than
    ``folds`` are simply spread over the first folds.
    """
    if folds < 2:
        raise DatasetError("folds must be >= 2")
    if folds > len(view):
        raise DatasetError(f"cannot make {folds} folds from {len(view)} rows")
    rng = np.random.default_rng(seed)
    y = view.y
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in np.unique(y)])
    fold_ids = np.empty(len(view), dtype=np.int64)
    fold_ids[order] = np.arange(len(view)) % folds
    return DatasetView(view.source, view.row_indices, fold_ids)


# --------------------------------------------------------------------------
# scaling


@dataclass(frozen=True, eq=False)
class MinMaxParams:
    minimum: np.ndarray
    span: np.ndarray = field(repr=False)

    def apply(self, X: np.ndarray, clamp: bool = True) -> np.ndarray:
        shifted = np.asarray(X, dtype=np.float64) - self.minimum
        # constant train columns map to 0
        out = np.divide(shifted, self.span, out=np.zeros_like(shifted), where=self.span > 0)
        if clamp:
            np.clip(out, 0.0, 1.0, out=out)
        return out

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxParams":
        X = np.asarray(X, dtype=np.float64)
        lo = X.min(axis=0)
        return cls(lo, X.max(axis=0) - lo)


def normalize(train: DatasetView, test: DatasetView):
    """Min-max scale both views with parameters fitted on ``train`` only.

    Returns ``(train', test', params)``; the new views reference a scaled copy
    of the source dataset with identical row indices and folds.
    """
    if train.source is not test.source:
        raise DatasetError("train and test views must reference the same dataset")
    ds = train.source
    params = MinMaxParams.fit(train.X)
    scaled = params.apply(ds.features, clamp=True)
    new = Dataset(ds.name, scaled, ds.labels, ds.class_names, ds.feature_names)
    return train.with_source(new), test.with_source(new), params
