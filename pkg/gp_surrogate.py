"""
Gaussian-process regression with an ARD Matern-5/2 kernel.

Inputs are mapped to the unit cube through the cut bounds, targets are standardized,
and the length-scales and signal variance are chosen by multi-start L-BFGS-B
on the log marginal likelihood.
"""
import math

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from config_loader import config
from errors import ConditioningError, InvalidInputError

LENGTHSCALE_BOUNDS = (0.01, 10.0)
SIGNAL_VARIANCE_BOUNDS = (0.05, 20.0)
DEFAULT_LENGTHSCALE = 0.3
DEFAULT_SIGNAL_VARIANCE = 1.0
SQRT5 = math.sqrt(5.0)


def matern52(X1, X2, lengthscales, signal_variance):
    r = cdist(X1 / lengthscales, X2 / lengthscales)
    return signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-SQRT5 * r)


def _factor(K, jitter=None, max_jitter=None):
    """Lower Cholesky factor of K + jitter*I, escalating jitter x10 until it succeeds."""
    jitter = config.GP_JITTER if jitter is None else jitter
    max_jitter = config.GP_MAX_JITTER if max_jitter is None else max_jitter
    eye = np.eye(K.shape[0])
    while jitter <= max_jitter * (1 + 1e-9):
        try:
            return cholesky(K + jitter * eye, lower=True), jitter
        except LinAlgError:
            jitter *= 10.0
    raise ConditioningError(f"Kernel matrix is not positive definite even with jitter {max_jitter}")


class GPSurrogate:
    def __init__(self, X, y, lengthscales, signal_variance, bounds=None):
        self.bounds = bounds
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.X_unit = self._to_unit(self.X)
        self.y_mean = float(self.y.mean())
        std = float(self.y.std())
        self.y_std = std if std > 0 else 1.0
        self.y_standard = (self.y - self.y_mean) / self.y_std
        self.lengthscales = np.asarray(lengthscales, dtype=np.float64)
        self.signal_variance = float(signal_variance)

        K = matern52(self.X_unit, self.X_unit, self.lengthscales, self.signal_variance)
        self.L, self.jitter = _factor(K)
        self.alpha = cho_solve((self.L, True), self.y_standard)

    def _to_unit(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X if self.bounds is None else self.bounds.to_unit(X)

    def predict_standardized(self, X):
        Xs = self._to_unit(X)
        Ks = matern52(Xs, self.X_unit, self.lengthscales, self.signal_variance)
        mean = Ks @ self.alpha
        v = solve_triangular(self.L, Ks.T, lower=True)
        variance = np.maximum(self.signal_variance - np.sum(v * v, axis=0), 0.0)
        return mean, variance

    def predict(self, X):
        """Posterior (mean, variance) at X in target units."""
        mean, variance = self.predict_standardized(X)
        return mean * self.y_std + self.y_mean, variance * self.y_std ** 2


def _log_marginal_likelihood(X_unit, y_standard, theta):
    lengthscales, signal_variance = np.exp(theta[:-1]), math.exp(theta[-1])
    K = matern52(X_unit, X_unit, lengthscales, signal_variance)
    try:
        L, _ = _factor(K)
    except ConditioningError:
        return -np.inf
    alpha = cho_solve((L, True), y_standard)
    n = y_standard.shape[0]
    return float(-0.5 * y_standard @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi))


def _negative_log_likelihood(theta, X_unit, y_standard):
    value = _log_marginal_likelihood(X_unit, y_standard, theta)
    # unfactorable kernels score as a very poor fit
    return -value if np.isfinite(value) else 1e10


def gp_fit(X, y, bounds=None, rng=None, restarts=None):
    """
    Fit a GP surrogate to observations (X, y).

    Args:
        X (array): (n, d) cut vectors, n >= 2.
        y (array): (n,) objective values.
        bounds (CutBounds, optional): maps X to the unit cube; X is used as-is without it.
        rng (np.random.Generator, optional): draws the random restarts.
        restarts (int, optional): random starts besides the default one.

    Raises:
        ConditioningError: the kernel matrix cannot be factored with the largest jitter.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] < 2 or X.shape[0] != y.shape[0]:
        raise InvalidInputError(f"gp_fit needs at least 2 aligned observations, got {X.shape[0]} / {y.shape[0]}")
    rng = rng if rng is not None else np.random.default_rng(0)
    restarts = config.GP_RESTARTS if restarts is None else restarts

    d = X.shape[1]
    X_unit = X if bounds is None else bounds.to_unit(X)
    std = y.std()
    y_standard = (y - y.mean()) / (std if std > 0 else 1.0)

    lower = np.r_[np.full(d, math.log(LENGTHSCALE_BOUNDS[0])), math.log(SIGNAL_VARIANCE_BOUNDS[0])]
    upper = np.r_[np.full(d, math.log(LENGTHSCALE_BOUNDS[1])), math.log(SIGNAL_VARIANCE_BOUNDS[1])]
    starts = [np.r_[np.full(d, math.log(DEFAULT_LENGTHSCALE)), math.log(DEFAULT_SIGNAL_VARIANCE)]]
    starts += [rng.uniform(lower, upper) for _ in range(restarts)]

    best_theta, best_value = starts[0], np.inf
    for start in starts:
        result = minimize(_negative_log_likelihood, start, args=(X_unit, y_standard), method="L-BFGS-B",
                          bounds=list(zip(lower, upper)))
        if result.fun < best_value:
            best_theta, best_value = np.clip(result.x, lower, upper), float(result.fun)

    return GPSurrogate(X, y, np.exp(best_theta[:-1]), math.exp(best_theta[-1]), bounds)
