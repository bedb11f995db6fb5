"""Self-adaptive weighted differential evolution for wrapper feature selection."""

__version__ = "0.1.0"

from .classifier import FitnessEvaluator, knn_predict, test_accuracy
from .dataset import (
    Dataset,
    DatasetView,
    assign_folds,
    load_builtin,
    load_dataset,
    normalize,
    split_train_test,
)
from .engine import EngineConfig, RunLog, RunResult, run
from .estimator import SaWDESelector
from .strategy import build_strategy_pool, rank_cms

__all__ = [
    "Dataset",
    "DatasetView",
    "EngineConfig",
    "FitnessEvaluator",
    "RunLog",
    "RunResult",
    "SaWDESelector",
    "assign_folds",
    "build_strategy_pool",
    "knn_predict",
    "load_builtin",
    "load_dataset",
    "normalize",
    "rank_cms",
    "run",
    "split_train_test",
    "test_accuracy",
]
