import numpy as np
import pandas as pd
import pytest

from oracles import numeric_gradient, relative_error
from waterfall.data import Protected, build_dataset, group_mask, synth_biased
from waterfall.learners.tree import ForestParams
from waterfall.metrics import fairness_report
from waterfall.mitigation.base import fit_biased
from waterfall.mitigation.pre import (LFRModel, LFRSettings, W_EPS, _memberships, dir_fit, dir_transform,
                                      lfr_apply, lfr_fit, lfr_objective)


def _numeric_ds(x, groups, extra=None):
    frame = pd.DataFrame({"x": x, "g": groups, "y": ["yes", "no"] * (len(x) // 2) + ["yes"] * (len(x) % 2)})
    numeric = ["x"]
    if extra is not None:
        frame["z"] = extra
        numeric.append("z")
    return build_dataset(frame, "y", "yes", Protected("g", privileged_values=frozenset({"p"})), numeric, ["g"])


def test_dir_hand_example():
    ds = _numeric_ds([1.0, 2.0, 3.0, 11.0, 12.0, 13.0], ["u"] * 3 + ["p"] * 3)
    out = dir_transform(dir_fit(ds, 1.0), ds)
    assert out.frame["x"].tolist() == pytest.approx([6, 7, 8, 6, 7, 8])


def test_dir_identity_at_zero():
    ds = synth_biased(200, 0.2, seed=1)
    rep = dir_fit(ds, 0.0)
    assert dir_transform(rep, ds).equals(ds)


def test_dir_constant_group_feature():
    x = [5.0, 5.0, 5.0, 1.0, 4.0, 9.0]
    ds = _numeric_ds(x, ["u"] * 3 + ["p"] * 3)
    out = dir_transform(dir_fit(ds, 1.0), ds).frame["x"]
    assert np.all(np.isfinite(out))
    assert out.min() >= 1.0 and out.max() <= 9.0


def test_dir_full_repair_equalizes_quantiles(rng):
    n = 4000
    g = np.where(rng.random(n) < 0.5, "p", "u")
    x = np.where(g == "p", rng.normal(3, 2, n), rng.exponential(1.0, n))
    ds = _numeric_ds(x, g)
    out = dir_transform(dir_fit(ds, 1.0), ds).frame["x"].to_numpy()
    m = group_mask(ds)
    grid = np.linspace(0.01, 0.99, 99)
    qu, qp = np.quantile(out[~m], grid), np.quantile(out[m], grid)
    spread = np.quantile(out, 0.99) - np.quantile(out, 0.01)
    # agreement up to one grid step of the 101-point quantile grid
    assert np.max(np.abs(qu - qp)) <= 0.02 * spread


def test_dir_preserves_rank_labels_protected(rng):
    ds = synth_biased(500, 0.2, seed=2)
    out = dir_transform(dir_fit(ds, 1.0), ds)
    m = group_mask(ds)
    for f in ("x1", "x2", "x3"):
        for sel in (m, ~m):
            before, after = ds.frame[f].to_numpy()[sel], out.frame[f].to_numpy()[sel]
            # non-decreasing map: any strict order before is kept (ties may merge)
            order = np.argsort(before, kind="stable")
            assert np.all(np.diff(after[order]) >= -1e-12)
    assert np.array_equal(out.y, ds.y)
    assert out.frame["group"].equals(ds.frame["group"])
    assert out.frame["band"].equals(ds.frame["band"])


def test_dir_monotone_in_level():
    ds = synth_biased(300, 0.2, seed=3)
    outs = [dir_transform(dir_fit(ds, lam), ds).frame["x2"].to_numpy() for lam in (0, 0.25, 0.5, 0.75, 1)]
    steps = np.diff(np.stack(outs), axis=0)
    # each record moves in one direction by equal increments
    assert np.allclose(steps, steps[0], atol=1e-9)


def test_dir_errors():
    ds = _numeric_ds([1.0, 2.0, 3.0, 4.0], ["u", "p", "p", "p"])
    with pytest.raises(ValueError):
        dir_fit(ds, 1.0)
    ok = _numeric_ds([1.0, 2.0, 3.0, 4.0], ["u", "u", "p", "p"])
    with pytest.raises(ValueError):
        dir_fit(ok, 1.5)
    other = _numeric_ds([1.0, 2.0, 3.0, 4.0], ["u", "u", "p", "p"], extra=[0.0, 1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        dir_transform(dir_fit(ok, 1.0), other)


def test_lfr_gradient(rng):
    n, d, k = 12, 3, 3
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, n).astype(float)
    mask = np.arange(n) % 2 == 0
    params = np.concatenate([rng.normal(size=k * d), rng.uniform(0.2, 0.8, k)])
    f = lambda p: lfr_objective(p, X, y, mask, k, 0.3, 1.0, 2.0)[0]  # noqa: E731
    _, g = lfr_objective(params, X, y, mask, k, 0.3, 1.0, 2.0)
    assert relative_error(g, numeric_gradient(f, params, h=1e-6)) <= 1e-4


def test_lfr_objective_matches_direct_formula(rng):
    n, d, k = 20, 4, 3
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, n).astype(float)
    mask = rng.random(n) < 0.5
    V, w = rng.normal(size=(k, d)), rng.uniform(0.1, 0.9, k)
    dist = ((X[:, None, :] - V[None]) ** 2).sum(-1)
    M = np.exp(-dist)
    M /= M.sum(1, keepdims=True)
    l_z = np.abs(M[~mask].mean(0) - M[mask].mean(0)).sum()
    l_x = np.mean(((X - M @ V) ** 2).sum(1))
    yh = M @ w
    l_y = -np.mean(y * np.log(yh) + (1 - y) * np.log(1 - yh))
    loss, _ = lfr_objective(np.r_[V.ravel(), w], X, y, mask, k, 0.5, 1.5, 3.0)
    assert loss == pytest.approx(3.0 * l_z + 0.5 * l_x + 1.5 * l_y, rel=1e-10)
    assert np.allclose(_memberships(X, V).sum(1), 1.0, atol=1e-9)


def test_lfr_trace_and_bounds():
    ds = synth_biased(400, 0.2, seed=0)
    model = lfr_fit(ds, LFRSettings(max_iters=200, seed=1))
    assert all(b <= a + 1e-9 for a, b in zip(model.trace, model.trace[1:]))
    assert model.trace[-1] <= model.trace[0]
    assert np.all((model.w >= W_EPS) & (model.w <= 1 - W_EPS))
    pred = lfr_apply(model, ds)
    assert pred.scores.min() >= 0 and pred.scores.max() <= 1
    assert lfr_apply(model, ds, 0.0).labels.all()
    assert not lfr_apply(model, ds, 1.0).labels.any()


def test_lfr_label_only_objective():
    ds = synth_biased(400, 0.2, seed=4)
    model = lfr_fit(ds, LFRSettings(a_x=0.0, a_z=0.0, max_iters=300, seed=0))
    acc = np.mean(lfr_apply(model, ds).labels == ds.y)
    assert acc >= max(ds.y.mean(), 1 - ds.y.mean())


def test_lfr_identical_prototypes():
    ds = synth_biased(100, 0.2, seed=5)
    model = lfr_fit(ds, LFRSettings(max_iters=5, seed=0))
    same = LFRModel(np.repeat(model.prototypes[:1], 3, axis=0), np.array([0.2, 0.5, 0.9]), model.settings,
                    model.mean, model.scale, model.columns, model.exclude, model.trace, model.converged)
    scores = lfr_apply(same, ds).scores
    assert np.allclose(scores, scores[0])


@pytest.mark.parametrize("seed", range(5))
def test_lfr_large_parity_weight(seed):
    ds = synth_biased(600, 0.3, seed=seed)
    biased = fit_biased(ds, ForestParams(n_trees=20, seed=seed), exclude=("group",))
    base = fairness_report(ds.y, biased.predict(ds).labels, group_mask(ds)).statistical_parity
    model = lfr_fit(ds, LFRSettings(a_z=1e4, max_iters=300, seed=seed))
    fair = fairness_report(ds.y, lfr_apply(model, ds).labels, group_mask(ds)).statistical_parity
    assert abs(fair) < abs(base)


def test_lfr_errors():
    ds = synth_biased(100, 0.2, seed=0)
    with pytest.raises(ValueError):
        lfr_fit(ds, LFRSettings(k=1))
    model = lfr_fit(ds, LFRSettings(max_iters=3))
    other = _numeric_ds([1.0, 2.0, 3.0, 4.0], ["u", "u", "p", "p"])
    with pytest.raises(ValueError):
        lfr_apply(model, other)
