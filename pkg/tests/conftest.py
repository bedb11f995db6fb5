import numpy as np
import pytest

from sawde.dataset import Dataset, assign_folds, normalize, split_train_test


def random_dataset(seed, n=40, D=6, classes=2, name="rand"):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % classes
    rng.shuffle(y)
    return Dataset(name, rng.random((n, D)), y)


def separable_dataset(seed, n=60, D=20, informative=2):
    """Two classes split by the sign of the first informative feature sum,
    with a clear margin; the rest is uniform noise."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, D))
    y = np.arange(n) % 2
    rng.shuffle(y)
    for j in range(informative):
        X[:, j] = np.where(y == 1, rng.uniform(0.75, 1.0, n), rng.uniform(0.0, 0.25, n))
    return Dataset("separable", X, y)


def prepared(ds, seed=0, folds=3):
    tr, te = split_train_test(ds, 0.7, seed)
    tr, te, _ = normalize(tr, te)
    return assign_folds(tr, folds, seed), te


@pytest.fixture
def small_problem():
    return prepared(random_dataset(3, n=45, D=8))


def diagonal_dataset(seed, n=120, D=20, gap=0.2):
    """Label is x0 + x1 > 1; points within ``gap`` of the boundary are
    dropped so 3-NN on the two informative features can be perfect."""
    rng = np.random.default_rng(seed)
    X = rng.random((4 * n, D))
    X = X[np.abs(X[:, 0] + X[:, 1] - 1) > gap][:n]
    return Dataset("diagonal", X, (X[:, 0] + X[:, 1] > 1).astype(int))
