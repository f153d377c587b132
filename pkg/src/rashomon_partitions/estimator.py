"""Scikit-learn style wrapper around Rashomon set enumeration."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .analysis import conditional_mean_effects
from .hasse import FeatureSpace
from .loss import Dataset, LossConfig
from .rashomon import enumerate_rps, reference_objective


class RashomonPartitionRegressor(RegressorMixin, BaseEstimator):
    """Posterior-weighted average over the Rashomon partition set.

    Features are integer factor levels. In profile mode (the default) level
    0 is the control and levels run ``0 .. R-1``; with ``single_profile=True``
    levels run ``1 .. R``.

    Parameters
    ----------
    lam : float, default=0.01
        Penalty per pool.
    epsilon : float, default=0.1
        The set holds every permissible partition with
        ``Q <= q0 * (1 + epsilon)``.
    reference : {"fullsplit", "greedy"}, default="fullsplit"
        How the reference objective ``q0`` is obtained.
    levels : sequence of int, optional
        Level count per feature. Inferred from the training data when omitted.
    single_profile : bool, default=False
    cross_profile : bool, default=True
        Allow pools spanning adjacent profiles.
    outcome_model : {"constant", "linear"}, default="constant"
    h_max : int, optional
    max_rps : int, optional
    n_jobs : int, default=1

    Attributes
    ----------
    rps_ : RashomonSet
    space_ : FeatureSpace
    q0_ : float
    effects_ : ndarray of shape (n_combinations,)
        Posterior-weighted expected outcome of every combination; ``nan``
        where the set says nothing.
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> X = np.array([[1, 1], [1, 2], [2, 1], [2, 2]] * 5)
    >>> y = np.where(X[:, 0] == 2, 1.0, 0.0)
    >>> est = RashomonPartitionRegressor(lam=0.05, epsilon=0.2, single_profile=True).fit(X, y)
    >>> est.predict([[2, 1]])
    array([1.])
    """

    def __init__(self, lam=0.01, epsilon=0.1, reference="fullsplit", levels=None, single_profile=False,
                 cross_profile=True, outcome_model="constant", h_max=None, max_rps=None, n_jobs=1):
        self.lam = lam
        self.epsilon = epsilon
        self.reference = reference
        self.levels = levels
        self.single_profile = single_profile
        self.cross_profile = cross_profile
        self.outcome_model = outcome_model
        self.h_max = h_max
        self.max_rps = max_rps
        self.n_jobs = n_jobs

    def _space(self, X):
        if self.levels is not None:
            levels = tuple(int(v) for v in self.levels)
        elif self.single_profile:
            levels = tuple(int(v) for v in X.max(axis=0))
        else:
            levels = tuple(int(v) + 1 for v in X.max(axis=0))
        if len(levels) != X.shape[1]:
            raise ValueError(f"levels has {len(levels)} entries but X has {X.shape[1]} features")
        return FeatureSpace(levels, self.single_profile)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=None, y_numeric=True)
        if not np.issubdtype(X.dtype, np.integer):
            if not np.all(np.equal(np.mod(X, 1), 0)):
                raise ValueError("features must be integer levels")
        X = X.astype(np.int64)
        space = self._space(X)
        d = Dataset.from_observations(space, X, y)
        cfg = LossConfig(lam=self.lam, outcome_model=self.outcome_model)
        q0, _ = reference_objective(space, d, cfg, self.reference)
        self.rps_ = enumerate_rps(space, d, cfg, q0, self.epsilon, cross_profile=self.cross_profile,
                                  h_max=self.h_max, max_rps=self.max_rps, n_jobs=self.n_jobs)
        self.space_ = space
        self.q0_ = q0
        self.effects_ = conditional_mean_effects(self.rps_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Posterior-weighted expected outcome of each row's combination."""
        check_is_fitted(self, "rps_")
        X = check_array(X, dtype=None)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        X = X.astype(np.int64)
        idx = np.array([self.space_.index(row) for row in X], dtype=np.int64)
        return self.effects_[idx]
