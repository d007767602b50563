"""Post-processing mitigation on a fixed model's scores or labels.

Group index convention throughout: 0 = unprivileged, 1 = privileged.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..metrics import EmptyGroupError

ROC_METRICS = ("statistical_parity", "disparate_impact", "average_odds", "equal_opportunity")


def _groups(mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.all() or not mask.any():
        raise EmptyGroupError("both groups must be nonempty")
    return mask


# ---------------------------------------------------------------------------
# reject option classification


@dataclass(frozen=True)
class ROCParams:
    threshold: float
    margin: float
    metric: str = "statistical_parity"
    eps: float = 0.05
    satisfied: bool = True
    metric_value: float | None = None
    balanced_accuracy: float | None = None

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0 <= self.margin <= min(self.threshold, 1 - self.threshold) + 1e-12:
            raise ValueError("critical band must stay inside (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def roc_apply(params: ROCParams, scores, mask) -> np.ndarray:
    """Threshold outside the critical band; inside it, unprivileged records
    get the favorable label and privileged records the unfavorable one."""
    scores = np.asarray(scores, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    labels = (scores >= params.threshold).astype(np.int64)
    band = np.abs(scores - params.threshold) < params.margin
    labels[band & ~mask] = 1
    labels[band & mask] = 0
    return labels


def default_roc_grid(n_thresholds: int = 99, n_margins: int = 50) -> list[tuple[float, float]]:
    grid = []
    for t in np.round(np.linspace(0.01, 0.99, n_thresholds), 10):
        top = min(t, 1 - t)
        for j in range(1, n_margins + 1):
            grid.append((float(t), float(top * j / n_margins)))
    return grid


def _metric_distance(metric, sel, tpr, fpr):
    """Distance of a group metric from its ideal value, vectorized over
    candidates. ``sel``/``tpr``/``fpr`` are (unpriv, priv) pairs of arrays."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if metric == "statistical_parity":
            v = sel[0] - sel[1]
            return np.abs(v), v
        if metric == "disparate_impact":
            v = np.where(sel[1] > 0, sel[0] / sel[1], np.nan)
            return np.where(np.isnan(v), np.inf, np.abs(v - 1)), v
        if metric == "equal_opportunity":
            v = tpr[0] - tpr[1]
            return np.where(np.isnan(v), np.inf, np.abs(v)), v
        if metric == "average_odds":
            v = 0.5 * ((fpr[0] - fpr[1]) + (tpr[0] - tpr[1]))
            return np.where(np.isnan(v), np.inf, np.abs(v)), v
    raise ValueError(f"unknown metric {metric!r}; choose from {ROC_METRICS}")


def roc_fit(scores, y, mask, metric: str = "statistical_parity", eps: float = 0.05,
            grid=None) -> ROCParams:
    """Grid search over (threshold, margin).

    Among candidates whose |metric - ideal| <= eps on the fit data, the one
    with the highest balanced accuracy wins (first in grid order on ties).
    When none qualifies, the candidate closest to the ideal is returned with
    ``satisfied=False``.
    """
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y).astype(np.int64)
    mask = _groups(mask)
    if metric not in ROC_METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {ROC_METRICS}")
    grid = default_roc_grid() if grid is None else list(grid)
    if not grid:
        raise ValueError("empty (threshold, margin) grid")
    t = np.array([g[0] for g in grid])
    m = np.array([g[1] for g in grid])

    dist = np.empty(len(grid))
    value = np.empty(len(grid))
    bacc = np.empty(len(grid))
    pos, neg = y == 1, y == 0
    n_pos, n_neg = pos.sum(), neg.sum()
    groups = (~mask, mask)
    # chunked over candidates to bound memory
    chunk = max(1, 2_000_000 // max(len(scores), 1))
    for lo in range(0, len(grid), chunk):
        tt = t[lo:lo + chunk][:, None]
        mm = m[lo:lo + chunk][:, None]
        lab = scores[None, :] >= tt
        band = np.abs(scores[None, :] - tt) < mm
        lab = np.where(band, ~mask[None, :], lab)
        sel, tpr, fpr = [], [], []
        for g in groups:
            lg = lab[:, g]
            sel.append(lg.mean(axis=1))
            gp, gn = pos[g], neg[g]
            tpr.append(lg[:, gp].sum(axis=1) / gp.sum() if gp.any() else np.full(len(lg), np.nan))
            fpr.append(lg[:, gn].sum(axis=1) / gn.sum() if gn.any() else np.full(len(lg), np.nan))
        dd, vv = _metric_distance(metric, sel, tpr, fpr)
        dist[lo:lo + chunk] = dd
        value[lo:lo + chunk] = vv
        tp = lab[:, pos].sum(axis=1) / n_pos if n_pos else np.zeros(len(lab))
        tn = (~lab[:, neg]).sum(axis=1) / n_neg if n_neg else np.zeros(len(lab))
        bacc[lo:lo + chunk] = 0.5 * (tp + tn)

    feasible = dist <= eps
    if feasible.any():
        cand = np.flatnonzero(feasible)
        best = cand[np.argmax(bacc[cand])]
        ok = True
    else:
        best = int(np.argmin(dist))
        ok = False
    v = value[best]
    return ROCParams(float(t[best]), float(m[best]), metric, float(eps), ok,
                     None if not np.isfinite(v) else float(v), float(bacc[best]))


# ---------------------------------------------------------------------------
# equalized odds


@dataclass(frozen=True)
class EOMix:
    """p[g][b]: probability of outputting favorable for group g given base
    label b."""

    p: tuple[tuple[float, float], tuple[float, float]]
    objective: float = 0.0
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for row in self.p:
            for v in row:
                if not 0 <= v <= 1:
                    raise ValueError("mixing probabilities must lie in [0, 1]")

    @property
    def array(self) -> np.ndarray:
        return np.array(self.p, dtype=float)

    def to_dict(self) -> dict:
        return {"p": [list(r) for r in self.p], "objective": self.objective, "flags": list(self.flags)}


IDENTITY_MIX = ((0.0, 1.0), (0.0, 1.0))


def _eo_tables(base, y, mask):
    """Counts n[g, y, b] of records by group, true label and base label."""
    n = np.zeros((2, 2, 2))
    g = mask.astype(int)
    np.add.at(n, (g, y, base), 1)
    return n


def eo_expected_rates(mix: EOMix, base, y, mask):
    """Expected post-mix (TPR, FPR) per group, analytically from counts."""
    base = np.asarray(base).astype(int)
    y = np.asarray(y).astype(int)
    n = _eo_tables(base, y, _groups(mask))
    p = mix.array
    tpr, fpr = [], []
    for g in range(2):
        pos = n[g, 1].sum()
        neg = n[g, 0].sum()
        tpr.append((n[g, 1] @ p[g]) / pos if pos else None)
        fpr.append((n[g, 0] @ p[g]) / neg if neg else None)
    return tpr, fpr


def eo_objective(p: np.ndarray, base, y, mask) -> float:
    """Expected number of misclassified records after mixing."""
    n = _eo_tables(np.asarray(base).astype(int), np.asarray(y).astype(int), np.asarray(mask, bool))
    p = np.asarray(p, dtype=float).reshape(2, 2)
    return float(sum(n[g, 1] @ (1 - p[g]) + n[g, 0] @ p[g] for g in range(2)))


def eo_fit(base_labels, y, mask) -> EOMix:
    """Exact solution of the 4-variable linear program: minimize expected
    error subject to equal post-mix TPR and FPR across groups.

    Every basic feasible solution is enumerated (each variable free or at
    one of its bounds) and the best one returned; ties prefer the mix
    closest to the identity.
    """
    base = np.asarray(base_labels).astype(int)
    y = np.asarray(y).astype(int)
    mask = _groups(mask)
    n = _eo_tables(base, y, mask)
    flags = []

    # variables x = [p00, p01, p10, p11] with p_gb
    rows, rhs = [], []
    for yy, name in ((1, "tpr"), (0, "fpr")):
        tot = [n[g, yy].sum() for g in range(2)]
        if tot[0] == 0 or tot[1] == 0:
            flags.append(f"empty cell: {name} constraint dropped")
            continue
        a = np.zeros(4)
        a[0:2] = n[0, yy] / tot[0]
        a[2:4] = -n[1, yy] / tot[1]
        rows.append(a)
        rhs.append(0.0)
    A = np.array(rows).reshape(-1, 4)
    b = np.array(rhs)
    cost = np.concatenate([n[g, 0] - n[g, 1] for g in range(2)])  # linear part of the error
    const = float(n[:, 1].sum())
    identity = np.array(IDENTITY_MIX).ravel()

    best = None
    for assign in itertools.product((None, 0.0, 1.0), repeat=4):
        free = [i for i, a in enumerate(assign) if a is None]
        fixed = [i for i, a in enumerate(assign) if a is not None]
        x = np.zeros(4)
        for i in fixed:
            x[i] = assign[i]
        r = b - A[:, fixed] @ x[fixed] if len(fixed) else b.copy()
        if free:
            Af = A[:, free]
            if len(A) == 0 or np.linalg.matrix_rank(Af) < len(free):
                continue
            sol, *_ = np.linalg.lstsq(Af, r, rcond=None)
            x[free] = sol
        resid = A @ x - b if len(A) else np.zeros(0)
        if np.any(np.abs(resid) > 1e-12) or np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            continue
        x = np.clip(x, 0.0, 1.0)
        obj = const + float(cost @ x)
        key = (round(obj, 9), float(np.abs(x - identity).sum()), tuple(x))
        if best is None or key < best[0]:
            best = (key, x, obj)
    if best is None:
        raise ValueError("equalized-odds program is infeasible")
    x = best[1]
    return EOMix(((float(x[0]), float(x[1])), (float(x[2]), float(x[3]))), best[2], tuple(flags))


def eo_apply(mix: EOMix, base_labels, mask, seed: int = 0) -> np.ndarray:
    base = np.asarray(base_labels).astype(int)
    g = np.asarray(mask, dtype=bool).astype(int)
    prob = mix.array[g, base]
    draws = np.random.default_rng(seed).random(len(base))
    return (draws < prob).astype(np.int64)


# ---------------------------------------------------------------------------
# calibrated equalized odds

CEO_COSTS = ("fnr", "fpr", "weighted")


@dataclass(frozen=True)
class CEOMix:
    alpha: tuple[float, float]
    base_rates: tuple[float, float]
    cost: str = "weighted"
    costs: tuple[float, float] = (0.0, 0.0)
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not all(0 <= a <= 1 for a in self.alpha):
            raise ValueError("mixing rates must lie in [0, 1]")
        if self.alpha[0] > 0 and self.alpha[1] > 0:
            raise ValueError("at most one group may mix")

    def to_dict(self) -> dict:
        return {"alpha": list(self.alpha), "base_rates": list(self.base_rates), "cost": self.cost,
                "costs": list(self.costs), "flags": list(self.flags)}


def generalized_cost(scores, y, cost: str) -> float:
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y).astype(int)
    fnr = float(np.mean(1 - scores[y == 1]))
    fpr = float(np.mean(scores[y == 0]))
    if cost == "fnr":
        return fnr
    if cost == "fpr":
        return fpr
    if cost == "weighted":
        return 0.5 * (fnr + fpr)
    raise ValueError(f"unknown cost {cost!r}; choose from {CEO_COSTS}")


def ceo_fit(scores, y, mask, cost: str = "weighted") -> CEOMix:
    """Mix the lower-cost group toward its base-rate predictor until its
    expected generalized cost matches the other group's."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y).astype(int)
    mask = _groups(mask)
    groups = (~mask, mask)
    for sel in groups:
        if len(np.unique(y[sel])) < 2:
            raise ValueError("each group needs both label values")
    base_rates = tuple(float(y[sel].mean()) for sel in groups)
    costs = tuple(generalized_cost(scores[sel], y[sel], cost) for sel in groups)
    trivial = tuple(generalized_cost(np.full(sel.sum(), br), y[sel], cost)
                    for sel, br in zip(groups, base_rates))
    alpha = [0.0, 0.0]
    flags = []
    if costs[0] != costs[1]:
        low = int(np.argmin(costs))
        high = 1 - low
        denom = trivial[low] - costs[low]
        if denom <= 0 or math.isclose(denom, 0.0, abs_tol=1e-15):
            flags.append("trivial predictor does not raise the low-cost group's cost; no mixing")
        else:
            a = (costs[high] - costs[low]) / denom
            if a > 1:
                flags.append("mixing rate clamped to 1")
            alpha[low] = float(min(max(a, 0.0), 1.0))
    return CEOMix(tuple(alpha), base_rates, cost, costs, tuple(flags))


def ceo_expected_costs(mix: CEOMix, scores, y, mask) -> tuple[float, float]:
    """Post-mix generalized costs in expectation over the mixing draws."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y).astype(int)
    mask = _groups(mask)
    out = []
    for g, sel in enumerate((~mask, mask)):
        s = (1 - mix.alpha[g]) * scores[sel] + mix.alpha[g] * mix.base_rates[g]
        out.append(generalized_cost(s, y[sel], mix.cost))
    return tuple(out)


def ceo_apply(mix: CEOMix, scores, mask, seed: int = 0, threshold: float = 0.5):
    """Replace each mixing-group score by its group base rate with
    probability alpha; returns (labels, mixed scores)."""
    scores = np.asarray(scores, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    g = mask.astype(int)
    alpha = np.asarray(mix.alpha)[g]
    replace = np.random.default_rng(seed).random(len(scores)) < alpha
    mixed = np.where(replace, np.asarray(mix.base_rates)[g], scores)
    return (mixed >= threshold).astype(np.int64), mixed
