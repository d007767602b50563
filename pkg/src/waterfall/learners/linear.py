"""L2-regularized logistic regression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import NonFiniteObjective, OptResult, OptSettings, minimize


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    intercept: float
    converged: bool
    n_iter: int
    trace: tuple[float, ...]

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.weights):
            raise ValueError(f"expected {len(self.weights)} columns, got shape {X.shape}")
        return X @ self.weights + self.intercept

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        scores = sigmoid(self.decision(X))
        return (scores >= 0.5).astype(np.int64), scores


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def log1pexp(z):
    """Stable log(1 + exp(z))."""
    return np.logaddexp(0.0, z)


def logistic_objective(theta, X, y, l2):
    """Summed negative log-likelihood plus (l2/2)||w||^2; intercept is last
    and unpenalized."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    nll = float(np.sum(log1pexp(z) - y * z))
    f = nll + 0.5 * l2 * float(w @ w)
    r = sigmoid(z) - y
    g = np.empty_like(theta)
    g[:-1] = X.T @ r + l2 * w
    g[-1] = r.sum()
    return f, g


def fit_logistic(X, y, l2: float = 0.0, opt: OptSettings = OptSettings(max_iters=1000, tol=1e-8)) -> LinearModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("logistic regression needs a 0/1 target")
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    theta0 = np.zeros(X.shape[1] + 1)
    if not np.all(np.isfinite(X)):
        raise NonFiniteObjective("non-finite feature values")
    res: OptResult = minimize(lambda t: logistic_objective(t, X, y, l2), theta0, opt)
    return LinearModel(res.x[:-1].copy(), float(res.x[-1]), res.converged, res.n_iter, res.trace)
