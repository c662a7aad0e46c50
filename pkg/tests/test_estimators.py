"""Tests for the estimator facade."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qmp import MartingaleQuantile, MartingaleQuantileRegressor


class TestMartingaleQuantile:
    def test_fit_predict(self, rng):
        y = rng.gamma(2.0, size=100)
        est = MartingaleQuantile(grid_size=51, n_permutations=2,
                                 c_grid_size=4)
        assert est.fit(y) is est
        u = np.linspace(0.1, 0.9, 17)
        pred = est.predict(u)
        assert pred.shape == (17,)
        assert np.all(np.diff(pred) >= 0)

    def test_predict_before_fit(self):
        with pytest.raises(NotFittedError):
            MartingaleQuantile().predict(0.5)

    def test_get_set_params(self):
        est = MartingaleQuantile(grid_size=31)
        params = est.get_params()
        assert params["grid_size"] == 31
        est.set_params(bandwidth_c=0.5)
        assert est.bandwidth_c == 0.5

    def test_clone_is_unfitted(self, rng):
        est = MartingaleQuantile(grid_size=21, n_permutations=2,
                                 c_grid_size=4).fit(rng.normal(size=40))
        fresh = clone(est)
        assert fresh.grid_size == 21
        with pytest.raises(NotFittedError):
            fresh.predict(0.5)


class TestMartingaleQuantileRegressor:
    def test_fit_predict(self, rng):
        X = rng.normal(2.0, 1.0, size=(150, 1))
        y = 1.0 + 0.5 * X[:, 0] + rng.normal(size=150)
        est = MartingaleQuantileRegressor(grid_size=31, n_permutations=2,
                                          c_grid_size=4)
        est.fit(X, y)
        pred = est.predict(np.array([[0.0], [2.0], [4.0]]))
        assert pred.shape == (3,)
        # medians increase along the positive slope
        assert pred[0] < pred[1] < pred[2]

    def test_quantile_levels_ordered(self, rng):
        X = rng.normal(size=(120, 2))
        y = X @ np.array([1.0, -0.5]) + rng.normal(size=120)
        est = MartingaleQuantileRegressor(grid_size=31, n_permutations=2,
                                          c_grid_size=4).fit(X, y)
        row = np.array([[0.3, -0.1]])
        q10 = est.predict(row, u=0.1)
        q50 = est.predict(row, u=0.5)
        q90 = est.predict(row, u=0.9)
        assert q10[0] <= q50[0] <= q90[0]

    def test_predict_before_fit(self):
        with pytest.raises(NotFittedError):
            MartingaleQuantileRegressor().predict(np.zeros((1, 2)))
