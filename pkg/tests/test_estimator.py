import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rashomon_partitions import RashomonPartitionRegressor


def data(rng, n=8):
    X = np.array([(a, b) for a in range(3) for b in range(3)] * n)
    y = (X[:, 0] > 0).astype(float) + 0.2 * rng.standard_normal(len(X))
    return X, y


def test_params_roundtrip():
    est = RashomonPartitionRegressor(lam=0.2, epsilon=0.05)
    assert est.get_params()["lam"] == 0.2
    assert clone(est).get_params() == est.get_params()
    est.set_params(epsilon=0.5)
    assert est.epsilon == 0.5


def test_fit_predict(rng):
    X, y = data(rng)
    est = RashomonPartitionRegressor(lam=0.05, epsilon=0.2).fit(X, y)
    assert est.n_features_in_ == 2 and len(est.rps_) >= 1
    pred = est.predict([[0, 0], [2, 2]])
    assert pred[0] == pytest.approx(0.0, abs=0.3) and pred[1] == pytest.approx(1.0, abs=0.3)
    assert est.score(X, y) > 0.5


def test_single_profile_doctest_case():
    X = np.array([[1, 1], [1, 2], [2, 1], [2, 2]] * 5)
    y = np.where(X[:, 0] == 2, 1.0, 0.0)
    est = RashomonPartitionRegressor(lam=0.05, epsilon=0.2, single_profile=True).fit(X, y)
    assert est.predict([[2, 1]]).tolist() == [1.0]


def test_validation(rng):
    X, y = data(rng)
    with pytest.raises(NotFittedError):
        RashomonPartitionRegressor().predict(X)
    with pytest.raises(ValueError):
        RashomonPartitionRegressor().fit(X + 0.5, y)
    with pytest.raises(ValueError):
        RashomonPartitionRegressor().fit(X, y[:-1])
    est = RashomonPartitionRegressor(lam=0.05).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 3), dtype=int))
