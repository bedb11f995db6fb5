"""KNN classification restricted to a feature mask, and the k-fold CV
accuracy used as the wrapper fitness.

Neighbour order is (squared Euclidean distance, row position) and class votes
tie toward the smallest class id, so results never depend on evaluation
order or thread count.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional

import numpy as np
from numba import njit

from .dataset import DatasetView

__all__ = [
    "FitnessEvaluator",
    "knn_predict",
    "knn_predict_many",
    "test_accuracy",
    "as_mask",
]


def as_mask(mask, D: Optional[int] = None) -> np.ndarray:
    m = np.asarray(mask, dtype=bool).ravel()
    if D is not None and m.size != D:
        raise ValueError(f"mask has {m.size} bits, expected {D}")
    return m


@njit(cache=True, nogil=True)
def _vote(best_i, y, n_classes):
    votes = np.zeros(n_classes, dtype=np.int64)
    for t in range(best_i.shape[0]):
        if best_i[t] >= 0:
            votes[y[best_i[t]]] += 1
    winner = 0
    for c in range(1, n_classes):
        if votes[c] > votes[winner]:
            winner = c
    return winner


@njit(cache=True, nogil=True)
def _distances(RT, QT, q, sel, dist):
    # feature-major accumulation; per-pair sums still run in feature order
    dist[:] = 0.0
    for jj in range(sel.shape[0]):
        row = RT[sel[jj]]
        xq = QT[sel[jj], q]
        for r in range(row.shape[0]):
            t = row[r] - xq
            dist[r] += t * t


@njit(cache=True, nogil=True)
def _k_nearest(dist, folds, qfold, best_d, best_i):
    """Keep the k smallest entries of dist in (distance, position) order.

    Positions are scanned ascending and only strictly closer rows displace,
    so equal distances keep the earlier row. ``qfold < 0`` disables the
    fold filter.
    """
    k = best_d.shape[0]
    for t in range(k):
        best_d[t] = np.inf
        best_i[t] = -1
    kth = np.inf
    for r in range(dist.shape[0]):
        s = dist[r]
        if s < kth and (qfold < 0 or folds[r] != qfold):
            p = k - 1
            while p > 0 and best_d[p - 1] > s:
                best_d[p] = best_d[p - 1]
                best_i[p] = best_i[p - 1]
                p -= 1
            best_d[p] = s
            best_i[p] = r
            kth = best_d[k - 1]


@njit(cache=True, nogil=True)
def _cv_correct(XT, y, folds, sel, k, n_classes):
    n = XT.shape[1]
    dist = np.empty(n)
    best_d = np.empty(k)
    best_i = np.empty(k, dtype=np.int64)
    correct = 0
    for q in range(n):
        _distances(XT, XT, q, sel, dist)
        _k_nearest(dist, folds, folds[q], best_d, best_i)
        if _vote(best_i, y, n_classes) == y[q]:
            correct += 1
    return correct


@njit(cache=True, nogil=True)
def _predict(XtrT, ytr, XqT, sel, k, n_classes):
    dist = np.empty(XtrT.shape[1])
    best_d = np.empty(k)
    best_i = np.empty(k, dtype=np.int64)
    out = np.empty(XqT.shape[1], dtype=np.int64)
    for q in range(XqT.shape[1]):
        _distances(XtrT, XqT, q, sel, dist)
        _k_nearest(dist, ytr, -1, best_d, best_i)
        out[q] = _vote(best_i, ytr, n_classes)
    return out


def knn_predict_many(train_X, train_y, queries, mask, k: int = 3, n_classes: Optional[int] = None):
    """Predict a batch of query rows against ``(train_X, train_y)`` using only
    the features set in ``mask``."""
    train_X = np.asarray(train_X, dtype=np.float64)
    train_y = np.ascontiguousarray(train_y, dtype=np.int64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    sel = np.flatnonzero(as_mask(mask, train_X.shape[1]))
    if sel.size == 0:
        raise ValueError("knn_predict requires a non-empty feature mask")
    if not 1 <= k <= train_X.shape[0]:
        raise ValueError(f"k={k} must lie in [1, {train_X.shape[0]}]")
    if n_classes is None:
        n_classes = int(train_y.max()) + 1
    return _predict(
        np.ascontiguousarray(train_X.T), train_y, np.ascontiguousarray(queries.T), sel, k, n_classes
    )


def knn_predict(train_X, train_y, query, mask, k: int = 3) -> int:
    """Majority class among the ``k`` nearest training rows to ``query``."""
    return int(knn_predict_many(train_X, train_y, query, mask, k)[0])


def test_accuracy(train: DatasetView, test: DatasetView, mask, k: int = 3) -> float:
    """Accuracy on ``test`` with ``train`` as the neighbour pool. Does not
    touch any evaluation budget."""
    mask = as_mask(mask, train.D)
    if not mask.any() or len(test) == 0:
        return 0.0
    pred = knn_predict_many(train.X, train.y, test.X, mask, k, train.class_count)
    return float(np.count_nonzero(pred == test.y)) / len(test)


test_accuracy.__test__ = False  # not a pytest test


class FitnessEvaluator:
    """k-fold cross-validated KNN accuracy over a training view.

    Every call to :meth:`cv_accuracy` (or every mask passed to
    :meth:`evaluate`) counts as one function evaluation, whether or not the
    value came from the cache.

    Parameters
    ----------
    train : DatasetView
        Training rows with ``fold_assignment`` set.
    k_neighbors : int, default 3
    cache : bool, default True
        Memoise accuracy per mask. Changes wall-clock only.
    workers : int, default 1
        Threads used by :meth:`evaluate` for uncached masks.
    """

    def __init__(self, train: DatasetView, k_neighbors: int = 3, cache: bool = True, workers: int = 1):
        if train.fold_assignment is None:
            raise ValueError("training view has no fold assignment; call assign_folds first")
        counts = np.bincount(train.fold_assignment)
        if k_neighbors < 1 or k_neighbors > len(train) - counts.max():
            raise ValueError(f"k_neighbors={k_neighbors} exceeds the rows available outside a fold")
        self.train = train
        self.k_neighbors = int(k_neighbors)
        self.folds = train.folds
        self.D = train.D
        self.workers = max(1, int(workers))
        self._XT = np.ascontiguousarray(train.X.T)
        self._y = np.ascontiguousarray(train.y)
        self._fold = np.ascontiguousarray(train.fold_assignment)
        self._n_classes = train.class_count
        self._cache: Optional[dict] = {} if cache else None
        self._lock = threading.Lock()
        self._fes = 0
        self._pool: Optional[ThreadPoolExecutor] = None

    @property
    def fes(self) -> int:
        return self._fes

    def _count(self, n: int) -> None:
        with self._lock:
            self._fes += n

    def _compute(self, mask: np.ndarray) -> float:
        sel = np.flatnonzero(mask)
        if sel.size == 0:
            return 0.0
        correct = _cv_correct(self._XT, self._y, self._fold, sel, self.k_neighbors, self._n_classes)
        return correct / self._y.shape[0]

    def cv_accuracy(self, mask) -> float:
        return float(self.evaluate([mask])[0])

    def evaluate(self, masks: Iterable) -> np.ndarray:
        """Accuracies for a batch of masks, in input order."""
        masks = [as_mask(m, self.D) for m in masks]
        out = np.empty(len(masks))
        if self._cache is None:
            out[:] = self._map(masks)
        else:
            keys = [m.tobytes() for m in masks]
            todo = {}
            for key, m in zip(keys, masks):
                if key not in self._cache and key not in todo:
                    todo[key] = m
            if todo:
                vals = self._map(list(todo.values()))
                self._cache.update(zip(todo.keys(), vals))
            out[:] = [self._cache[key] for key in keys]
        self._count(len(masks))
        return out

    def _map(self, masks: list) -> list:
        if self.workers == 1 or len(masks) < 2:
            return [self._compute(m) for m in masks]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.workers)
        return list(self._pool.map(self._compute, masks))

    def close(self) -> None:
        if getattr(self, "_pool", None) is not None:
            self._pool.shutdown()
            self._pool = None

    def __del__(self):
        self.close()
