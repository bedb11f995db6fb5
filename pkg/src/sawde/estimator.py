"""scikit-learn feature selector wrapping the SaWDE engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import Dataset, MinMaxParams, assign_folds
from .engine import EngineConfig, RunLog, run

__all__ = ["SaWDESelector"]


class SaWDESelector(SelectorMixin, BaseEstimator):
    """Wrapper feature selection by self-adaptive weighted differential
    evolution with a KNN cross-validation objective.

    Features are min-max scaled on the data passed to ``fit`` before the
    search; ``transform`` only drops columns and never rescales.

    Parameters
    ----------
    population_size : int, default=100
    n_subpopulations : int, default=5
        Must divide ``population_size``.
    max_fes : int, default=50_000
        Budget of fitness evaluations.
    theta : float, default=0.6
        A feature is selected when its position component is >= theta.
    n_neighbors : int, default=3
    cv : int, default=3
        Folds of the stratified cross-validation used as fitness.
    algorithm : str, default="sawde"
        ``"sawde"`` or ``"single-cms:<1..8>"`` for a one-scenario baseline.
    early_stop : bool, default=True
        Stop once CV accuracy is 1.0 with fewer than half the features.
    n_jobs : int, default=1
        Evaluation threads; results do not depend on it.
    random_state : int, default=0

    Attributes
    ----------
    support_ : ndarray of shape (n_features_in_,)
    best_score_ : float
        CV accuracy of the selected subset on the training data.
    result_ : RunResult
    log_ : RunLog
    feature_importances_ : ndarray
        ``weight1 + weight2`` tallies gathered during the search.
    """

    def __init__(
        self,
        population_size=100,
        n_subpopulations=5,
        max_fes=50_000,
        theta=0.6,
        n_neighbors=3,
        cv=3,
        algorithm="sawde",
        early_stop=True,
        n_jobs=1,
        random_state=0,
    ):
        self.population_size = population_size
        self.n_subpopulations = n_subpopulations
        self.max_fes = max_fes
        self.theta = theta
        self.n_neighbors = n_neighbors
        self.cv = cv
        self.algorithm = algorithm
        self.early_stop = early_stop
        self.n_jobs = n_jobs
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("SaWDESelector needs at least two classes")
        seed = 0 if self.random_state is None else int(self.random_state)
        self.scaler_ = MinMaxParams.fit(X)
        ds = Dataset("fit", self.scaler_.apply(X), codes)
        train = assign_folds(ds.view(), self.cv, seed)
        config = EngineConfig(
            N=self.population_size,
            m=self.n_subpopulations,
            max_fes=self.max_fes,
            theta=self.theta,
            k=self.n_neighbors,
            folds=self.cv,
            seed=seed,
            early_stop=self.early_stop,
            algorithm=self.algorithm,
            workers=self.n_jobs,
        )
        self.log_ = RunLog()
        self.result_ = run(config, train, None, self.log_)
        self.support_ = self.result_.best_mask.copy()
        self.best_score_ = self.result_.train_accuracy
        w = self.result_.weights_final
        self.feature_importances_ = (w.weight1 + w.weight2).astype(float)
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_
