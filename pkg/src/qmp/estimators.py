"""Scikit-learn style wrappers around the functional fitting API.

These exist for pipeline interoperability: hyperparameters live on the
estimator, ``fit`` stores the fitted state on trailing-underscore
attributes, and ``get_params``/``set_params`` come from BaseEstimator.
The functional API in fit/regression remains the primary interface.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .fit import FitConfig, fit
from .grid import evaluate
from .regression import RegDataset, conditional_quantile, reg_fit

__all__ = ["MartingaleQuantile", "MartingaleQuantileRegressor"]


def _make_config(est) -> FitConfig:
    return FitConfig(
        grid_size=est.grid_size,
        n_permutations=est.n_permutations,
        c_grid_size=est.c_grid_size,
        permutation_seed=est.permutation_seed,
        learning_rate=est.learning_rate,
        bandwidth_c=est.bandwidth_c,
        bandwidth_k=est.bandwidth_k,
    )


class MartingaleQuantile(BaseEstimator):
    """Unconditional quantile-function estimator.

    ``fit(y)`` runs the recursive update with permutation averaging;
    ``predict(u)`` evaluates the fitted quantile function by linear
    interpolation on the grid.
    """

    def __init__(self, grid_size: int = 200, n_permutations: int = 10,
                 c_grid_size: int = 20, permutation_seed: int = 0,
                 learning_rate: float | None = None,
                 bandwidth_c: float | None = None, bandwidth_k: float = 0.5):
        self.grid_size = grid_size
        self.n_permutations = n_permutations
        self.c_grid_size = c_grid_size
        self.permutation_seed = permutation_seed
        self.learning_rate = learning_rate
        self.bandwidth_c = bandwidth_c
        self.bandwidth_k = bandwidth_k

    def fit(self, y, X=None):
        y = np.asarray(y, dtype=float).ravel()
        self.result_ = fit(y, _make_config(self))
        self.n_features_in_ = 1
        return self

    def predict(self, u):
        check_is_fitted(self, "result_")
        u = np.asarray(u, dtype=float)
        return evaluate(self.result_.posterior_center, u)


class MartingaleQuantileRegressor(BaseEstimator):
    """Linear quantile regression with one coefficient function per column.

    ``fit(X, y)`` adds the intercept internally; ``predict(X, u=0.5)``
    returns the conditional u-quantile at each row after rearrangement.
    """

    def __init__(self, grid_size: int = 200, n_permutations: int = 10,
                 c_grid_size: int = 20, permutation_seed: int = 0,
                 learning_rate: float | None = None,
                 bandwidth_c: float | None = None, bandwidth_k: float = 0.5):
        self.grid_size = grid_size
        self.n_permutations = n_permutations
        self.c_grid_size = c_grid_size
        self.permutation_seed = permutation_seed
        self.learning_rate = learning_rate
        self.bandwidth_c = bandwidth_c
        self.bandwidth_k = bandwidth_k

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        data = RegDataset.from_covariates(y, X)
        self.result_ = reg_fit(data, _make_config(self))
        self.n_features_in_ = X.shape[1] if X.ndim == 2 else 1
        return self

    def predict(self, X, u: float = 0.5):
        check_is_fitted(self, "result_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        beta = self.result_.coefficients
        out = np.empty(X.shape[0])
        for idx, row in enumerate(X):
            q = conditional_quantile(beta, np.concatenate([[1.0], row]))
            out[idx] = evaluate(q, np.asarray(u, dtype=float))
        return out
