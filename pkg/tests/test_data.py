import itertools

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waterfall.data import (UNKNOWN, DataError, Protected, build_dataset, encode, group_mask, kfold,
                            kfold_indices, load_registered, split, split_indices, synth_biased)
from waterfall.metrics import EmptyGroupError, fairness_report


def _tiny(rows, numeric=(), categorical=("c",), protected=None):
    frame = pd.DataFrame(rows)
    protected = protected or Protected("g", privileged_values=frozenset({"a"}))
    return build_dataset(frame, "y", "yes", protected, list(numeric), list(categorical) + ["g"])


ADULT_HEADER = ("age,workclass,fnlwgt,education,education-num,marital-status,occupation,relationship,"
                "race,sex,capital-gain,capital-loss,hours-per-week,native-country,income\n")
ADULT_ROW = "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K\n"
ADULT_ROW2 = "50, ?, 83311, Bachelors, 13, Married-civ-spouse, ?, Husband, Black, Female, 0, 0, 13, United-States, >50K.\n"


def test_adult_dedup_three_rows(tmp_path):
    p = tmp_path / "adult.csv"
    p.write_text(ADULT_HEADER + ADULT_ROW + ADULT_ROW + ADULT_ROW2)
    ds = load_registered("adult", p)
    assert ds.n == 2
    assert ds.schema.favorable_value == ">50K"
    # missing categorical cells become the literal token; the trailing '.' on labels is dropped
    assert (ds.frame["workclass"] == UNKNOWN).sum() == 1
    assert (ds.frame["occupation"] == UNKNOWN).sum() == 1
    assert sorted(ds.y.tolist()) == [0, 1]


def test_adult_missing_column(tmp_path):
    p = tmp_path / "adult.csv"
    p.write_text("age,income\n30,<=50K\n40,>50K\n")
    with pytest.raises(DataError):
        load_registered("adult", p)


def test_unparseable_numeric_is_an_error(tmp_path):
    p = tmp_path / "adult.csv"
    p.write_text(ADULT_HEADER + ADULT_ROW + ADULT_ROW2.replace("50,", "fifty,", 1))
    with pytest.raises(DataError):
        load_registered("adult", p)


def test_non_binary_label(tmp_path):
    p = tmp_path / "adult.csv"
    p.write_text(ADULT_HEADER + ADULT_ROW + ADULT_ROW2 + ADULT_ROW.replace("<=50K", "maybe"))
    with pytest.raises(DataError):
        load_registered("adult", p)


def test_missing_file():
    with pytest.raises(DataError):
        load_registered("adult", "/nonexistent/adult.csv")


def test_bank_threshold_mask(tmp_path):
    p = tmp_path / "bank.csv"
    head = '"age";"job";"marital";"education";"default";"balance";"housing";"loan";"contact";"day";"month";"duration";"campaign";"pdays";"previous";"poutcome";"y"\n'
    r1 = '30;"admin.";"married";"secondary";"no";100;"yes";"no";"unknown";5;"may";200;1;-1;0;"unknown";"no"\n'
    r2 = '22;"student";"single";"tertiary";"no";50;"no";"no";"cellular";6;"may";300;2;-1;0;"unknown";"yes"\n'
    r3 = '30;"admin.";"married";"secondary";"no";100;"yes";"no";"unknown";5;"may";200;1;-1;0;"unknown";"no"\n'
    p.write_text(head + r1 + r2 + r3)
    ds = load_registered("bank", p)
    assert ds.n == 3  # bank rows are kept as-is, duplicates included
    assert ds.schema.protected.attribute == "age"
    assert group_mask(ds).tolist() == [True, False, True]


def test_adult_full_file(adult_path):
    ds = load_registered("adult", adult_path)
    assert ds.n <= 32561
    assert ds.schema.favorable_value == ">50K"
    enc = encode(ds)
    assert "Marital-status_Married-civ-spouse" in enc.column_names
    assert not ds.frame.isna().any().any()
    assert not (ds.frame[ds.schema.categorical] == "").any().any()


def test_adult_sex_override(adult_path):
    ds = load_registered("adult", adult_path, protected=Protected("sex", privileged_values=frozenset({"Male"})))
    assert np.array_equal(group_mask(ds), ds.frame["sex"].to_numpy() == "Male")


def test_encode_one_hot():
    ds = _tiny({"c": ["A", "B"], "g": ["a", "b"], "y": ["yes", "no"]})
    enc = encode(ds, exclude=("g",))
    assert enc.column_names == ("c_A", "c_B")
    assert enc.X.tolist() == [[1, 0], [0, 1]]


def test_encode_numeric_identity():
    frame = pd.DataFrame({"x": [1.5, -2.0, 3.0], "z": [0.0, 1.0, 2.0], "y": ["yes", "no", "yes"]})
    ds = build_dataset(frame, "y", "yes", Protected("z", threshold=1.0), ["x", "z"], [])
    enc = encode(ds)
    assert enc.column_names == ("x", "z")
    assert np.array_equal(enc.X, frame[["x", "z"]].to_numpy())


def test_one_hot_groups_sum_to_one():
    ds = synth_biased(300, 0.2, seed=3)
    enc = encode(ds)
    for col in ds.schema.categorical:
        cols = [i for i, s in enumerate(enc.source) if s == col]
        assert np.all(enc.X[:, cols].sum(axis=1) == 1)


def test_encode_injective():
    ds = synth_biased(400, 0.2, seed=4)
    enc = encode(ds)
    rows = {tuple(r) for r in enc.X}
    recs = {tuple(r) for r in ds.frame[ds.schema.names].astype(str).itertuples(index=False)}
    assert len(rows) == len(recs)


def test_split_sizes_and_determinism():
    y = np.array([1] * 40 + [0] * 60)
    tr, te = split_indices(y, 0.67, 7)
    assert (len(tr), len(te)) == (67, 33)
    tr2, te2 = split_indices(y, 0.67, 7)
    assert np.array_equal(tr, tr2) and np.array_equal(te, te2)
    assert np.array_equal(np.sort(np.r_[tr, te]), np.arange(100))
    for part in (tr, te):
        assert abs(y[part].mean() - y.mean()) <= 1 / len(part)


def test_split_three_rows():
    # labels [1, 1, 0]: the lone 0 cannot be split across two parts
    y = np.array([1, 1, 0])
    outcomes = []
    for seed in range(5):
        try:
            tr, _ = split_indices(y, 0.67, seed)
            outcomes.append(("ok", len(tr), set(y[tr])))
        except DataError:
            outcomes.append(("error",))
    for o in outcomes:
        assert o == ("error",) or (o[1] == 2 and o[2] == {0, 1})


def test_split_dataset_union():
    ds = synth_biased(200, 0.2, seed=1)
    a, b = split(ds, 0.67, 3)
    assert a.n + b.n == ds.n


@pytest.mark.parametrize("n,sizes", [(10, [2, 2, 2, 2, 2]), (11, [3, 2, 2, 2, 2])])
def test_kfold_sizes(n, sizes):
    y = np.array([0, 1] * (n // 2) + [0] * (n % 2))
    plan = kfold_indices(y, 5, 0)
    assert sorted(len(f) for f in plan.folds) == sorted(sizes)
    assert np.array_equal(np.sort(np.concatenate(plan.folds)), np.arange(n))


def test_kfold_errors():
    with pytest.raises(DataError):
        kfold_indices(np.array([0, 1, 0]), 5, 0)
    with pytest.raises(ValueError):
        kfold_indices(np.array([0, 1, 0]), 1, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=6, max_size=80), st.integers(2, 6), st.integers(0, 10**6))
def test_kfold_partition_property(labels, k, seed):
    y = np.array(labels)
    if k > len(y):
        return
    plan = kfold_indices(y, k, seed)
    allidx = np.concatenate(plan.folds)
    assert len(allidx) == len(y) and len(set(allidx.tolist())) == len(y)
    sizes = [len(f) for f in plan.folds]
    assert max(sizes) - min(sizes) <= 1
    for f in plan.folds:
        assert abs(y[f].mean() - y.mean()) <= 1 / len(f) + 1e-12


def test_kfold_deterministic():
    ds = synth_biased(300, 0.2, seed=0)
    a, b = kfold(ds, 5, 9), kfold(ds, 5, 9)
    assert all(np.array_equal(x, z) for x, z in zip(a.folds, b.folds))


def test_all_privileged_raises_downstream():
    ds = _tiny({"c": ["A", "B", "A"], "g": ["a", "a", "b"], "y": ["yes", "no", "yes"]})
    mask = np.ones(ds.n, dtype=bool)
    with pytest.raises(EmptyGroupError):
        fairness_report(ds.y, ds.y, mask)


def test_protected_must_split():
    frame = pd.DataFrame({"g": ["a", "a"], "y": ["yes", "no"]})
    with pytest.raises(DataError):
        build_dataset(frame, "y", "yes", Protected("g", privileged_values=frozenset({"a"})), [], ["g"])


def test_synth_no_gap():
    ds = synth_biased(10_000, 0.0, seed=1)
    m = group_mask(ds)
    assert abs(ds.y[~m].mean() - ds.y[m].mean()) < 0.05


def test_synth_gap():
    ds = synth_biased(10_000, 0.3, seed=1)
    m = group_mask(ds)
    assert abs((ds.y[m].mean() - ds.y[~m].mean()) - 0.3) <= 0.03


def test_synth_deterministic():
    a = synth_biased(500, 0.2, seed=5)
    b = synth_biased(500, 0.2, seed=5)
    assert a.frame.to_csv().encode() == b.frame.to_csv().encode()
    assert a.equals(b)


def test_synth_errors():
    with pytest.raises(ValueError):
        synth_biased(10, 0.2)
    with pytest.raises(ValueError):
        synth_biased(100, 1.5)


def test_category_order_stable():
    a = synth_biased(200, 0.2, seed=1)
    b = synth_biased(200, 0.2, seed=2)
    for col in ("band", "region", "group"):
        assert a.schema.column(col).categories == tuple(sorted(a.schema.column(col).categories))
        assert set(a.schema.column(col).categories) == set(b.schema.column(col).categories)


def test_split_stratum_enumeration():
    # every stratified 2/1 split of three rows labelled [1, 1, 0]
    y = [1, 1, 0]
    valid = [c for c in itertools.combinations(range(3), 2) if {y[i] for i in c} == {0, 1}]
    assert len(valid) == 2
