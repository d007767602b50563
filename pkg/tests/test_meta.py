import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waterfall.meta import (CohortReport, MetaParams, cohort_report, explain_negative_cohort, fit_meta,
                            mitigated_from_treatment, treatment_labels)


def test_treatment_hand():
    out = treatment_labels(["F", "U", "F", "U"], ["F", "F", "U", "U"], favorable="F")
    assert out.tolist() == [0, 1, -1, 0]


def test_treatment_identity_and_flip(rng):
    y = rng.integers(0, 2, 100)
    assert not treatment_labels(y, y).any()
    assert cohort_report(treatment_labels(y, y), np.zeros(100)).agree_ratio == 1.0
    flipped = treatment_labels(y, 1 - y)
    assert np.all(flipped != 0)
    assert np.sum(flipped == 1) == np.sum(y == 0)


def test_treatment_errors():
    with pytest.raises(ValueError):
        treatment_labels([0, 1], [0, 1, 1])
    with pytest.raises(ValueError):
        treatment_labels([0, 1, 2], [0, 1, 1])
    with pytest.raises(ValueError):
        treatment_labels(["a", "b"], ["a", "c"], favorable="a", alphabet=("a", "b"))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_treatment_inverse(pairs):
    y = np.array([a for a, _ in pairs])
    ym = np.array([b for _, b in pairs])
    t = treatment_labels(y, ym)
    assert np.array_equal(mitigated_from_treatment(y, t), ym)
    assert set(t.tolist()) <= {-1, 0, 1}


def test_report_hand():
    r = cohort_report([0, 0, 1, -1], [0, 0, 0, 0])
    assert (r.agree_ratio, r.disagree_pos_ratio, r.disagree_neg_ratio) == (0.5, 0.25, 0.25)
    assert r.meta_accuracy == 0.5
    assert r.agree_precision == 0.5
    assert r.disagree_pos_precision is None and r.disagree_neg_precision is None
    assert r.markdown_row("LFR") == "| LFR | 50.0% | 25.0% | 25.0% | 50.0% | 50.0% | 0.0% | 0.0% |"


def test_report_perfect(rng):
    lab = rng.choice([-1, 0, 1], 50)
    r = cohort_report(lab, lab)
    assert r.meta_accuracy == 1.0
    assert all(v in (None, 1.0) for v in (r.agree_precision, r.disagree_pos_precision,
                                          r.disagree_neg_precision))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([-1, 0, 1]), st.sampled_from([-1, 0, 1])), min_size=1, max_size=80))
def test_report_properties(pairs):
    lab = np.array([a for a, _ in pairs])
    pred = np.array([b for _, b in pairs])
    r = cohort_report(lab, pred)
    assert abs(r.agree_ratio + r.disagree_pos_ratio + r.disagree_neg_ratio - 1) <= 1e-9
    hits = sum(np.sum((pred == c) & (lab == c)) for c in (-1, 0, 1))
    assert r.meta_accuracy == pytest.approx(hits / len(lab))
    for v in (r.agree_precision, r.disagree_pos_precision, r.disagree_neg_precision):
        assert v is None or 0 <= v <= 1
    assert CohortReport.from_dict(r.to_dict()) == r


def test_report_errors():
    with pytest.raises(ValueError):
        cohort_report([0, 1], [0])


def test_all_zero_labels_single_leaf(rng):
    X = rng.normal(size=(60, 3))
    fit = fit_meta(X, np.zeros(60, dtype=int))
    assert fit.tree.n_nodes == 1 and fit.flags
    assert cohort_report(np.zeros(60), fit.oof_predictions).meta_accuracy == 1.0
    rules = explain_negative_cohort(fit.tree, ["a", "b", "c"], X, np.zeros(60))
    assert len(rules) == 0 and rules.flags
    assert rules.render().startswith("# ")


def _planted(rng, n=3000):
    age = rng.integers(18, 70, n).astype(float)
    unpriv = (rng.random(n) < 0.4).astype(float)
    other = rng.normal(size=n)
    X = np.c_[age, unpriv, other]
    lab = np.where((age <= 30) & (unpriv == 1), -1, np.where(other > 1.2, 1, 0))
    return X, lab


def test_planted_rule_recovered(rng):
    X, lab = _planted(rng)
    fit = fit_meta(X, lab, MetaParams())
    rules = explain_negative_cohort(fit.tree, ["age", "group_unpriv", "noise"], X, lab)
    assert len(rules) >= 1
    top = rules.rules[0]
    fired = top.fires(X)
    planted = (X[:, 0] <= 30) & (X[:, 1] == 1)
    assert np.mean(planted[fired]) >= 0.95
    # together the negative rules cover nearly all of the planted cohort
    covered = np.any([r.fires(X) for r in rules.rules], axis=0)
    assert covered[planted].mean() >= 0.95
    text = top.render()
    assert "age <= 30.50" in text and "group_unpriv > 0.50" in text and text.endswith("; [class: -1]")
    # reported precision is a plain recount on the eval split
    assert top.precision == pytest.approx(np.mean(lab[fired] == -1))
    assert top.support == int(fired.sum())


def test_negative_rules_sorted_by_support(rng):
    X = rng.normal(size=(2000, 3))
    lab = np.where(X[:, 0] < -0.5, -1, np.where(X[:, 1] > 1.0, -1, 0))
    fit = fit_meta(X, lab, MetaParams(max_depth=4))
    rules = explain_negative_cohort(fit.tree, list("abc"), X, lab)
    supports = [r.support for r in rules.rules]
    assert supports == sorted(supports, reverse=True)
    assert all(r.klass == -1 for r in rules.rules)


def test_oof_predictions_cover_everyone(rng):
    X, lab = _planted(rng, 500)
    fit = fit_meta(X, lab, MetaParams(folds=5))
    assert len(fit.oof_predictions) == 500
    assert set(np.unique(fit.oof_predictions)) <= {-1, 0, 1}
    assert cohort_report(lab, fit.oof_predictions).meta_accuracy > 0.9
