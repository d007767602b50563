"""Pre-processing mitigation: disparate impact repair and learned fair
prototypes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import NUMERIC, Dataset, encode, group_mask
from ..learners.optim import NonFiniteObjective, OptResult, OptSettings, minimize
from .base import PredictionSet

GRID_SIZE = 101


# ---------------------------------------------------------------------------
# disparate impact remover


@dataclass(frozen=True, eq=False)
class RepairMap:
    features: tuple[str, ...]
    grid: np.ndarray                 # quantile levels, 0..1
    group_quantiles: dict            # feature -> (unpriv Q, priv Q) on the grid
    target: dict                     # feature -> median quantile function
    level: float
    columns: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "level": self.level,
            "grid_size": len(self.grid),
            "target": {f: self.target[f].tolist() for f in self.features},
            "group_quantiles": {f: [q.tolist() for q in self.group_quantiles[f]] for f in self.features},
        }


def dir_fit(train: Dataset, level: float = 1.0, grid_size: int = GRID_SIZE) -> RepairMap:
    """Per-group empirical quantile functions of every numeric feature (the
    protected attribute excluded) and their pointwise median."""
    if not 0 <= level <= 1:
        raise ValueError("repair level must lie in [0, 1]")
    mask = group_mask(train)
    if mask.sum() < 2 or (~mask).sum() < 2:
        raise ValueError("each group needs at least 2 records")
    protected = train.schema.protected.attribute
    features = tuple(c.name for c in train.schema.columns if c.kind == NUMERIC and c.name != protected)
    if not features:
        raise ValueError("no numeric features to repair")
    grid = np.linspace(0.0, 1.0, grid_size)
    group_q, target = {}, {}
    for f in features:
        x = train.frame[f].to_numpy(dtype=float)
        qs = (np.quantile(x[~mask], grid), np.quantile(x[mask], grid))
        group_q[f] = qs
        target[f] = np.median(np.vstack(qs), axis=0)
    return RepairMap(features, grid, group_q, target, float(level), tuple(train.schema.names))


def _levels(x, quantiles, grid):
    """Quantile level of each x under a (possibly flat) quantile function.

    Flat stretches map to the mean level of the tied grid points.
    """
    uq, inv = np.unique(quantiles, return_inverse=True)
    lv = np.bincount(inv, weights=grid) / np.bincount(inv)
    return np.interp(x, uq, lv)


def dir_transform(repair: RepairMap, ds: Dataset) -> Dataset:
    if tuple(ds.schema.names) != repair.columns:
        raise ValueError("dataset columns do not match the columns the repair was fitted on")
    if repair.level == 0:
        return ds
    mask = group_mask(ds)
    frame = ds.frame.copy()
    lam = repair.level
    for f in repair.features:
        x = frame[f].to_numpy(dtype=float)
        out = x.copy()
        for g, sel in ((0, ~mask), (1, mask)):
            lv = _levels(x[sel], repair.group_quantiles[f][g], repair.grid)
            repaired = np.interp(lv, repair.grid, repair.target[f])
            out[sel] = (1 - lam) * x[sel] + lam * repaired
        frame[f] = out
    return ds.with_frame(frame)


# ---------------------------------------------------------------------------
# learning fair representations


@dataclass(frozen=True)
class LFRSettings:
    k: int = 5
    a_x: float = 0.01
    a_y: float = 1.0
    a_z: float = 50.0
    max_iters: int = 5000
    ftol: float = 0.0
    seed: int = 0
    n_init: int = 4
    probe_iters: int = 100


@dataclass(frozen=True, eq=False)
class LFRModel:
    prototypes: np.ndarray   # K x d, in standardized feature space
    w: np.ndarray            # K prototype label probabilities
    settings: LFRSettings
    mean: np.ndarray
    scale: np.ndarray
    columns: tuple[str, ...]
    exclude: tuple[str, ...]
    trace: tuple[float, ...]
    converged: bool
    message: str = ""

    def memberships(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.scale
        return _memberships(Z, self.prototypes)

    def to_dict(self) -> dict:
        return {"prototypes": self.prototypes.tolist(), "w": self.w.tolist(),
                "initial_loss": self.trace[0], "final_loss": self.trace[-1],
                "iterations": len(self.trace) - 1, "converged": self.converged,
                "stop": self.message}


W_EPS = 1e-6


def _memberships(X, V, XV=None):
    XV = X @ V.T if XV is None else XV
    logits = 2.0 * XV - (V * V).sum(1)[None, :]   # -|x - v|^2 up to a per-row constant
    logits -= logits.max(axis=1, keepdims=True)
    M = np.exp(logits)
    M /= M.sum(axis=1, keepdims=True)
    return M


def lfr_objective(params, X, y, mask, k, a_x, a_y, a_z, xx=None):
    """Weighted LFR loss and its gradient with respect to (prototypes, w).

    ``params`` is the flattened K x d prototype matrix followed by the K
    prototype label probabilities. ``xx`` optionally caches the total
    squared norm of ``X``. The reconstruction residual is never formed
    explicitly; everything is expressed through X V^T and M^T X.
    """
    n, d = X.shape
    V = params[: k * d].reshape(k, d)
    w = params[k * d:]
    XV = X @ V.T
    M = _memberships(X, V, XV)
    unpriv, priv = ~mask, mask
    n_u, n_p = unpriv.sum(), priv.sum()
    VV = V @ V.T

    # group parity of prototype usage
    gap = M[unpriv].mean(axis=0) - M[priv].mean(axis=0)
    l_z = float(np.abs(gap).sum())
    sgn = np.sign(gap)
    G = np.where(unpriv[:, None], sgn / n_u, -sgn / n_p) * a_z

    # reconstruction: R = M V - X, so R V^T = M VV - XV
    xx = float((X * X).sum()) if xx is None else xx
    MVV = M @ VV
    l_x = float(((MVV * M).sum() - 2.0 * (XV * M).sum() + xx) / n)
    G += a_x * (2.0 / n) * (MVV - XV)

    # label prediction
    wc = np.clip(w, W_EPS, 1 - W_EPS)
    yhat = M @ wc
    l_y = float(-np.mean(y * np.log(yhat) + (1 - y) * np.log(1 - yhat)))
    dyhat = (-y / yhat + (1 - y) / (1 - yhat)) / n
    G += a_y * dyhat[:, None] * wc[None, :]
    inside = (w >= W_EPS) & (w <= 1 - W_EPS)
    grad_w = a_y * (M.T @ dyhat) * inside

    # back through the softmax of negative squared distances
    dlogit = M * (G - (M * G).sum(axis=1, keepdims=True))
    both = np.concatenate([M, dlogit], axis=1).T @ X   # M^T X and dlogit^T X together
    MtX, DtX = both[:k], both[k:]
    grad_V = a_x * (2.0 / n) * ((M.T @ M) @ V - MtX)
    grad_V += 2.0 * (DtX - dlogit.sum(axis=0)[:, None] * V)

    loss = a_z * l_z + a_x * l_x + a_y * l_y
    return loss, np.concatenate([grad_V.ravel(), grad_w])


def lfr_fit(train: Dataset, settings: LFRSettings = LFRSettings(), exclude=None) -> LFRModel:
    """Fit prototypes on standardized encoded features of ``train``."""
    if settings.k < 2:
        raise ValueError("LFR needs at least 2 prototypes")
    exclude = (train.schema.protected.attribute,) if exclude is None else tuple(exclude)
    enc = encode(train, exclude=exclude)
    mask = group_mask(train)
    if mask.all() or not mask.any():
        raise ValueError("both groups must be present")
    mean = enc.X.mean(axis=0)
    scale = enc.X.std(axis=0)
    scale[scale == 0] = 1.0
    X = (enc.X - mean) / scale
    y = train.y.astype(float)
    n, d = X.shape
    k = settings.k

    lower = np.concatenate([np.full(k * d, -np.inf), np.full(k, W_EPS)])
    upper = np.concatenate([np.full(k * d, np.inf), np.full(k, 1 - W_EPS)])
    xx = float((X * X).sum())
    fun = lambda p: lfr_objective(p, X, y, mask, k, settings.a_x, settings.a_y, settings.a_z, xx)  # noqa: E731

    # Short probes from several starts, then the full budget from the best.
    # Some starts put every record on one prototype, where the gradient
    # vanishes and the fit never leaves the constant predictor.
    rng = np.random.default_rng(settings.seed)
    probe = OptSettings(max_iters=min(settings.probe_iters, settings.max_iters), tol=1e-7)
    best = None
    for _ in range(settings.n_init):
        V0 = X[rng.choice(n, size=k, replace=n < k)] + 0.01 * rng.normal(size=(k, d))
        w0 = rng.uniform(W_EPS, 1 - W_EPS, size=k)
        x0 = np.concatenate([V0.ravel(), w0])
        f0, _ = fun(x0)
        if not np.isfinite(f0):
            continue
        r = minimize(fun, x0, probe, lower, upper)
        if best is None or r.fun < best.fun:
            best = r
    if best is None:
        raise NonFiniteObjective("LFR loss is not finite at any initialization")
    left = settings.max_iters - best.n_iter
    if best.converged or left <= 0:
        res = best
    else:
        more = minimize(fun, best.x, OptSettings(max_iters=left, tol=1e-7, ftol=settings.ftol), lower, upper)
        res = OptResult(more.x, more.fun, best.trace + more.trace[1:], best.n_iter + more.n_iter,
                        more.converged, more.message)
    V = res.x[: k * d].reshape(k, d).copy()
    w = res.x[k * d:].copy()
    return LFRModel(V, w, settings, mean, scale, enc.column_names, exclude, res.trace, res.converged,
                    res.message)


def lfr_apply(model: LFRModel, ds: Dataset, threshold: float = 0.5) -> PredictionSet:
    enc = encode(ds, exclude=model.exclude)
    if enc.column_names != model.columns:
        raise ValueError("dataset encoding does not match the LFR model's columns")
    M = model.memberships(enc.X)
    # same clamp as the training objective, so scores stay inside (0, 1)
    scores = M @ np.clip(model.w, W_EPS, 1 - W_EPS)
    return PredictionSet((scores >= threshold).astype(np.int64), scores)
