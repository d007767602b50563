"""In-processing mitigation: logistic models with a prejudice-index penalty.

One logistic model per protected group; the group only selects which weight
vector scores a record and is never an input feature. The penalty is the
plug-in mutual information between predicted label and group, summed over
records.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset, encode, group_mask
from ..learners.linear import log1pexp, sigmoid
from ..learners.optim import NonFiniteObjective, OptSettings, minimize
from .base import PredictionSet

_P_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class PRModel:
    weights: np.ndarray      # (2, d): row 0 unprivileged, row 1 privileged
    intercepts: np.ndarray   # (2,)
    eta: float
    l2: float
    mean: np.ndarray
    scale: np.ndarray
    columns: tuple[str, ...]
    exclude: tuple[str, ...]
    trace: tuple[float, ...]
    converged: bool
    message: str = ""

    def scores(self, X, mask) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.scale
        g = np.asarray(mask, dtype=bool).astype(int)
        return sigmoid(np.einsum("ij,ij->i", Z, self.weights[g]) + self.intercepts[g])

    def to_dict(self) -> dict:
        return {"eta": self.eta, "l2": self.l2, "weights": self.weights.tolist(),
                "intercepts": self.intercepts.tolist(), "final_objective": self.trace[-1],
                "iterations": len(self.trace) - 1, "converged": self.converged,
                "stop": self.message}


def _unpack(theta, d):
    W = theta[: 2 * d].reshape(2, d)
    b = theta[2 * d:]
    return W, b


def prejudice_index_from_scores(scores, mask) -> float:
    """Sum over records of sum_y P(y|x) ln(P(y|s)/P(y)) with plug-in
    probabilities from the model scores."""
    scores = np.asarray(scores, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if mask.all() or not mask.any():
        raise ValueError("both groups must be present")
    p1 = np.clip(scores.mean(), _P_EPS, 1 - _P_EPS)
    p1_s = np.clip(np.array([scores[~mask].mean(), scores[mask].mean()]), _P_EPS, 1 - _P_EPS)
    g = mask.astype(int)
    a1 = np.log(p1_s[g] / p1)
    a0 = np.log((1 - p1_s[g]) / (1 - p1))
    return float(np.sum(scores * a1 + (1 - scores) * a0))


def pr_objective(theta, X, y, mask, eta, l2):
    """-loglik + eta * PI + (l2/2) * sum of squared weights, with gradient.

    The plug-in group and overall means are functions of theta; their
    contributions to the gradient cancel, leaving d PI / d score_n equal to
    the log-ratio term for record n.
    """
    n, d = X.shape
    W, b = _unpack(theta, d)
    g = mask.astype(int)
    z = np.einsum("ij,ij->i", X, W[g]) + b[g]
    m = sigmoid(z)
    nll = float(np.sum(log1pexp(z) - y * z))

    p1 = np.clip(m.mean(), _P_EPS, 1 - _P_EPS)
    p1_s = np.clip(np.array([m[~mask].mean(), m[mask].mean()]), _P_EPS, 1 - _P_EPS)
    a1 = np.log(p1_s[g] / p1)
    a0 = np.log((1 - p1_s[g]) / (1 - p1))
    pi = float(np.sum(m * a1 + (1 - m) * a0))

    f = nll + eta * pi + 0.5 * l2 * float(np.sum(W * W))
    dz = (m - y) + eta * (a1 - a0) * m * (1 - m)
    gW = np.zeros_like(W)
    gb = np.zeros(2)
    for k, sel in ((0, ~mask), (1, mask)):
        gW[k] = X[sel].T @ dz[sel] + l2 * W[k]
        gb[k] = dz[sel].sum()
    return f, np.concatenate([gW.ravel(), gb])


def pr_fit_matrix(X, y, mask, eta: float = 1.0, l2: float = 0.01,
                  opt: OptSettings = OptSettings(max_iters=1000, tol=1e-7)):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if mask.all() or not mask.any():
        raise ValueError("both groups must be present in the training data")
    d = X.shape[1]
    theta0 = np.zeros(2 * d + 2)
    f0, _ = pr_objective(theta0, X, y, mask, eta, l2)
    if not np.isfinite(f0):
        raise NonFiniteObjective("prejudice remover objective is not finite")
    return minimize(lambda t: pr_objective(t, X, y, mask, eta, l2), theta0, opt)


def pr_fit(train: Dataset, eta: float = 1.0, l2: float = 0.01,
           opt: OptSettings = OptSettings(max_iters=1000, tol=1e-7),
           standardize: bool = True, exclude=None) -> PRModel:
    exclude = (train.schema.protected.attribute,) if exclude is None else tuple(exclude)
    enc = encode(train, exclude=exclude)
    mask = group_mask(train)
    if standardize:
        mean = enc.X.mean(axis=0)
        scale = enc.X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean = np.zeros(enc.X.shape[1])
        scale = np.ones(enc.X.shape[1])
    X = (enc.X - mean) / scale
    res = pr_fit_matrix(X, train.y, mask, eta, l2, opt)
    W, b = _unpack(res.x, X.shape[1])
    return PRModel(W.copy(), b.copy(), float(eta), float(l2), mean, scale, enc.column_names,
                   exclude, res.trace, res.converged, res.message)


def pr_predict(model: PRModel, ds: Dataset) -> PredictionSet:
    enc = encode(ds, exclude=model.exclude)
    if enc.column_names != model.columns:
        raise ValueError("dataset encoding does not match the model's columns")
    s = model.scores(enc.X, group_mask(ds))
    return PredictionSet((s >= 0.5).astype(np.int64), s)


def prejudice_index(model: PRModel, ds: Dataset) -> float:
    return prejudice_index_from_scores(pr_predict(model, ds).scores, group_mask(ds))
