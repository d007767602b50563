"""Group fairness and accuracy metrics.

All functions take 0/1 label vectors (1 = favorable) and a boolean mask that
is True for privileged records. Undefined quantities (a rate with an empty
denominator) are reported as ``None`` and excluded from aggregation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

METRIC_NAMES = ("accuracy", "disparate_impact", "average_odds", "equal_opportunity",
                "statistical_parity")


class EmptyGroupError(ValueError):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def size(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def selection_rate(self) -> float:
        return (self.tp + self.fp) / self.size

    @property
    def tpr(self) -> float | None:
        pos = self.tp + self.fn
        return self.tp / pos if pos else None

    @property
    def fpr(self) -> float | None:
        neg = self.fp + self.tn
        return self.fp / neg if neg else None


@dataclass(frozen=True)
class GroupConfusion:
    privileged: Confusion
    unprivileged: Confusion


@dataclass(frozen=True)
class FairnessReport:
    accuracy: float
    disparate_impact: float | None
    average_odds: float | None
    equal_opportunity: float | None
    statistical_parity: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FairnessReport":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


def _check(y, yhat, mask):
    y = np.asarray(y).astype(np.int64)
    yhat = np.asarray(yhat).astype(np.int64)
    mask = np.asarray(mask, dtype=bool)
    if not (len(y) == len(yhat) == len(mask)):
        raise ValueError("y, yhat and mask must have equal lengths")
    if mask.all() or not mask.any():
        raise EmptyGroupError("both privileged and unprivileged groups must be nonempty")
    return y, yhat, mask


def _confusion(y, yhat) -> Confusion:
    tp = int(np.count_nonzero((y == 1) & (yhat == 1)))
    fp = int(np.count_nonzero((y == 0) & (yhat == 1)))
    tn = int(np.count_nonzero((y == 0) & (yhat == 0)))
    fn = int(np.count_nonzero((y == 1) & (yhat == 0)))
    return Confusion(tp, fp, tn, fn)


def group_confusion(y, yhat, mask) -> GroupConfusion:
    y, yhat, mask = _check(y, yhat, mask)
    return GroupConfusion(_confusion(y[mask], yhat[mask]), _confusion(y[~mask], yhat[~mask]))


def _diff(a, b):
    return None if a is None or b is None else a - b


def fairness_report(y, yhat, mask) -> FairnessReport:
    y, yhat, mask = _check(y, yhat, mask)
    gc = GroupConfusion(_confusion(y[mask], yhat[mask]), _confusion(y[~mask], yhat[~mask]))
    p, u = gc.privileged, gc.unprivileged
    sr_p, sr_u = p.selection_rate, u.selection_rate
    eod = _diff(u.tpr, p.tpr)
    fpr_gap = _diff(u.fpr, p.fpr)
    aod = None if eod is None or fpr_gap is None else 0.5 * (fpr_gap + eod)
    return FairnessReport(
        accuracy=float(np.mean(y == yhat)),
        disparate_impact=sr_u / sr_p if sr_p > 0 else None,
        average_odds=aod,
        equal_opportunity=eod,
        statistical_parity=sr_u - sr_p,
    )


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def mean_std(values) -> MeanStd:
    """Mean and sample (n-1) standard deviation over defined values."""
    vals = np.array([v for v in values if v is not None], dtype=float)
    if len(vals) == 0:
        raise ValueError("no defined values to aggregate")
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return MeanStd(float(np.mean(vals)), std, len(vals))


def aggregate(reports, names=METRIC_NAMES) -> dict[str, MeanStd]:
    """Per-metric mean/std across folds; undefined entries are skipped.

    Works for any report objects exposing the given attribute names.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    return {name: mean_std(getattr(r, name) for r in reports) for name in names}
