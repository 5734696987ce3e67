"""scikit-learn style wrappers.

Policy inputs are ``(T, 2)`` arrays with columns ``(lambda, tests per
capita)``; observations are ``(n, 2)`` arrays of daily ``(deaths,
positives)`` head-counts.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .agent import inner_sweep
from .calibration import (CalibrationConfig, ObservedSeries, calibrate, death_flow, extrapolate_tests,
                          positive_flow, quadratic_coefficients, smooth_7day)
from .core import build_vaccine_schedule
from .errors import ShapeError
from .government import outer_sweep
from .io import TRAJECTORY_COLUMNS, trajectory_table
from .params import POPULATION, ModelParams


def _policy(X, params):
    X = check_array(X, dtype=float, ensure_min_samples=2)
    if X.shape[1] != 2:
        raise ShapeError(f"policy matrix needs columns (lambda, tests), got {X.shape[1]}")
    return X, params.replace(horizon=X.shape[0])


class EquilibriumModel(BaseEstimator):
    """Agents' equilibrium distancing under a fixed policy matrix."""

    def __init__(self, params=None, tol=1e-8, eps=0.1, max_iter=10_000,
                 vaccine_mean=540.0, vaccine_variance=180.0):
        self.params = params
        self.tol = tol
        self.eps = eps
        self.max_iter = max_iter
        self.vaccine_mean = vaccine_mean
        self.vaccine_variance = vaccine_variance

    def fit(self, X, y=None):
        X, prm = _policy(X, self.params or ModelParams())
        T = X.shape[0]
        sched = build_vaccine_schedule(self.vaccine_mean, self.vaccine_variance, T)
        res = inner_sweep(X[:, 0], X[:, 1], prm, sched, tol=self.tol, eps=self.eps,
                          max_iter=self.max_iter, horizon=T)
        self.result_ = res
        self.alpha_ = res.alpha
        self.tau_ = res.tau
        self.n_iter_ = res.iterations
        return self

    def transform(self, X=None):
        """Trajectory table (dates dropped) as a ``(T, 12)`` array."""
        check_is_fitted(self, "result_")
        tab = trajectory_table(self.result_.trajectory)
        return np.column_stack([tab[c] for c in TRAJECTORY_COLUMNS[1:]])

    def predict(self, X=None):
        """Daily death flow implied by the fitted equilibrium, as a share of population."""
        check_is_fitted(self, "result_")
        return np.diff(self.result_.trajectory.grid.D)


class OptimalPolicy(BaseEstimator):
    """Government's optimal lockdown path for a given test path."""

    def __init__(self, params=None, tol=1e-6, eps=None, max_iter=5000, inner_tol=1e-8,
                 vaccine_mean=540.0, vaccine_variance=180.0):
        self.params = params
        self.tol = tol
        self.eps = eps
        self.max_iter = max_iter
        self.inner_tol = inner_tol
        self.vaccine_mean = vaccine_mean
        self.vaccine_variance = vaccine_variance

    def fit(self, X, y=None):
        """``X`` is a ``(T, 1)`` test path or a ``(T, 2)`` policy matrix whose lambda column seeds the sweep."""
        X = check_array(X, dtype=float, ensure_min_samples=2)
        prm = (self.params or ModelParams()).replace(horizon=X.shape[0])
        T = X.shape[0]
        lam0 = X[:, 0] if X.shape[1] == 2 else None
        sched = build_vaccine_schedule(self.vaccine_mean, self.vaccine_variance, T)
        res = outer_sweep(prm, X[:, -1], sched, tol=self.tol, eps=self.eps, lam0=lam0,
                          max_iter=self.max_iter, inner_tol=self.inner_tol)
        self.result_ = res
        self.lambda_ = res.lam
        self.eta_ = res.eta
        self.chi_ = res.chi
        self.n_iter_ = res.iterations
        return self

    def predict(self, X=None):
        check_is_fitted(self, "result_")
        return self.lambda_.copy()

    def score(self, X=None, y=None):
        check_is_fitted(self, "result_")
        return self.result_.objective


class Calibrator(RegressorMixin, BaseEstimator):
    """Fit of (beta, gamma, c, phi_plus) to daily deaths and positives."""

    def __init__(self, params=None, config=None, population=POPULATION,
                 vaccine_mean=540.0, vaccine_variance=180.0, x0=None):
        self.params = params
        self.config = config
        self.population = population
        self.vaccine_mean = vaccine_mean
        self.vaccine_variance = vaccine_variance
        self.x0 = x0

    def _series(self, y):
        y = check_array(y, dtype=float)
        if y.shape[1] != 2:
            raise ShapeError("observations need columns (deaths, positives)")
        z = np.zeros(y.shape[0])
        return ObservedSeries(y[:, 0], y[:, 1], z, z, smoothed=True)

    def fit(self, X, y):
        X, prm = _policy(X, self.params or ModelParams())
        cfg = self.config or CalibrationConfig()
        data = self._series(y)
        sched = build_vaccine_schedule(self.vaccine_mean, self.vaccine_variance, X.shape[0])
        res = calibrate(data, cfg, prm, X[:, 0], X[:, 1], sched, self.population, x0=self.x0)
        self.result_ = res
        self.theta_ = res.theta
        self.params_ = res.params
        self.loss_ = res.loss
        return self

    def predict(self, X):
        """Model ``(deaths, positives)`` flows at the fitted parameters."""
        check_is_fitted(self, "params_")
        X, _ = _policy(X, self.params_)
        T = X.shape[0]
        sched = build_vaccine_schedule(self.vaccine_mean, self.vaccine_variance, T)
        res = inner_sweep(X[:, 0], X[:, 1], self.params_.replace(horizon=T), sched, horizon=T)
        tr = res.trajectory
        return np.column_stack([death_flow(tr, self.population), positive_flow(tr, self.population)])

    def score(self, X, y):
        """Negative calibration loss at the fitted parameters."""
        check_is_fitted(self, "params_")
        cfg = self.config or CalibrationConfig()
        data = self._series(y)
        pred = self.predict(X)
        n = min(cfg.n_days, len(y))
        om = cfg.resolve_omega(data.window(n))
        dd = pred[:n, 0] - data.deaths_flow[:n]
        dp = pred[:n, 1] - data.positives_flow[:n]
        return -float(om * dd @ dd + (1 - om) * dp @ dp)


class SevenDaySmoother(TransformerMixin, BaseEstimator):
    """Column-wise centered seven-day mean."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=7)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float, ensure_min_samples=7)
        return np.column_stack([smooth_7day(col) for col in X.T])


class TestExtrapolator(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Quadratic continuation of an in-sample test series to ``horizon`` days."""

    __test__ = False  # keep pytest from collecting the class

    def __init__(self, horizon=600):
        self.horizon = horizon

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=3)
        if X.shape[1] != 1:
            raise ShapeError("test series must be a single column")
        self.series_ = X[:, 0].copy()
        self.coef_ = quadratic_coefficients(self.series_)
        return self

    def transform(self, X=None):
        check_is_fitted(self, "coef_")
        return extrapolate_tests(self.series_, self.horizon)[:, None]
