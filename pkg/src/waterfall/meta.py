"""Treatment-change labels and the explainable meta classifier.

A treatment label compares ground truth with a mitigated prediction:
0 when they agree, +1 when mitigation grants the favorable outcome to a
record whose true label is unfavorable, -1 in the opposite case.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import kfold_indices
from .learners.rules import RuleSet, extract_rules
from .learners.tree import DecisionTree, TreeParams, fit_tree

CLASSES = np.array([-1, 0, 1])
COHORTS = ("agree", "disagree_pos", "disagree_neg")
_CLASS_OF = {"agree": 0, "disagree_pos": 1, "disagree_neg": -1}


def treatment_labels(y, y_mitigated, favorable=1, alphabet=None) -> np.ndarray:
    """Per-record value in {-1, 0, +1}; labels may be raw values or 0/1."""
    y = np.asarray(y)
    ym = np.asarray(y_mitigated)
    if y.shape != ym.shape or y.ndim != 1:
        raise ValueError("y and y_mitigated must be 1-d and of equal length")
    seen = set(np.unique(y).tolist()) | set(np.unique(ym).tolist())
    if alphabet is not None:
        extra = seen - set(alphabet)
        if extra:
            raise ValueError(f"labels outside the alphabet: {sorted(map(str, extra))}")
    elif len(seen) > 2:
        raise ValueError("labels must be binary")
    fav_true = y == favorable
    fav_new = ym == favorable
    out = np.zeros(len(y), dtype=np.int8)
    out[fav_new & ~fav_true] = 1
    out[~fav_new & fav_true] = -1
    return out


def mitigated_from_treatment(y, labels, favorable=1, unfavorable=0) -> np.ndarray:
    """Inverse of :func:`treatment_labels` for binary label vectors."""
    y = np.asarray(y)
    labels = np.asarray(labels)
    out = y.copy()
    out[labels == 1] = favorable
    out[labels == -1] = unfavorable
    return out


# ---------------------------------------------------------------------------
# meta tree


@dataclass(frozen=True)
class MetaParams:
    max_depth: int = 6
    min_samples_leaf: int = 20
    folds: int = 5
    seed: int = 0


@dataclass(frozen=True, eq=False)
class MetaFit:
    tree: DecisionTree            # fitted on the whole audited split
    oof_predictions: np.ndarray   # out-of-fold predictions from the internal CV
    flags: tuple[str, ...] = ()


def fit_meta(X, labels, params: MetaParams = MetaParams()) -> MetaFit:
    """CART over classes {-1, 0, 1}, plus out-of-fold predictions from an
    internal stratified k-fold over the same records."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels).astype(np.int64)
    if not np.isin(labels, CLASSES).all():
        raise ValueError("treatment labels must lie in {-1, 0, 1}")
    tp = TreeParams(max_depth=params.max_depth, min_samples_leaf=params.min_samples_leaf,
                    seed=params.seed)
    present = np.unique(labels)
    if len(present) < 2:
        tree = fit_tree(X, labels, TreeParams(max_depth=0, seed=params.seed), classes=CLASSES)
        return MetaFit(tree, np.full(len(labels), present[0]), ("single treatment class; one-leaf tree",))
    tree = fit_tree(X, labels, tp, classes=CLASSES)
    oof = np.empty(len(labels), dtype=np.int64)
    k = min(params.folds, len(labels))
    plan = kfold_indices(labels, k, params.seed)
    for i in range(plan.k):
        tr, te = plan.train_test(i)
        fold_tree = fit_tree(X[tr], labels[tr], tp, classes=CLASSES)
        oof[te] = fold_tree.predict(X[te])[0]
    return MetaFit(tree, oof)


# ---------------------------------------------------------------------------
# cohort report


@dataclass(frozen=True)
class CohortReport:
    agree_ratio: float
    disagree_pos_ratio: float
    disagree_neg_ratio: float
    meta_accuracy: float
    agree_precision: float | None
    disagree_pos_precision: float | None
    disagree_neg_precision: float | None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CohortReport":
        return cls(**{f.name: d[f.name] for f in fields(cls)})

    def markdown_row(self, name: str) -> str:
        cells = [name] + [f"{100 * (getattr(self, f.name) or 0.0):.1f}%" for f in fields(self)]
        return "| " + " | ".join(cells) + " |"


def cohort_report(labels, predicted) -> CohortReport:
    labels = np.asarray(labels).astype(np.int64)
    predicted = np.asarray(predicted).astype(np.int64)
    if labels.shape != predicted.shape:
        raise ValueError("labels and predictions must have equal lengths")
    n = len(labels)
    if n == 0:
        raise ValueError("empty treatment labels")
    ratios = {c: float(np.count_nonzero(labels == _CLASS_OF[c])) / n for c in COHORTS}
    prec = {}
    for c in COHORTS:
        hit = predicted == _CLASS_OF[c]
        prec[c] = float(np.mean(labels[hit] == _CLASS_OF[c])) if hit.any() else None
    return CohortReport(ratios["agree"], ratios["disagree_pos"], ratios["disagree_neg"],
                        float(np.mean(labels == predicted)),
                        prec["agree"], prec["disagree_pos"], prec["disagree_neg"])


def explain_negative_cohort(tree: DecisionTree, column_names, eval_X, eval_labels) -> RuleSet:
    """Rules for leaves predicting -1, most-supported first, with precision
    measured on the evaluation split."""
    rules = extract_rules(tree, column_names, eval_X, np.asarray(eval_labels).astype(np.int64))
    neg = [r for r in rules.rules if r.klass == -1]
    neg.sort(key=lambda r: -r.support)
    flags = () if neg else ("no leaf predicts the negatively impacted class",)
    return RuleSet(tuple(neg), flags)
