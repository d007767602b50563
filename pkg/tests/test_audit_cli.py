import json
from contextlib import contextmanager

import numpy as np
import pytest

from waterfall import cli
from waterfall.audit import (AllMethodsFailed, AuditBundle, AuditConfig, ConfigError, _fold_context,
                             derive_seed, load_dataset, run_audit)
from waterfall.data import encode, group_mask, kfold
from waterfall.learners.linear import fit_logistic
from waterfall.meta import treatment_labels
from waterfall.mitigation import REGISTRY, FoldContext, Method, Outcome, PredictionSet, get_method, register

SMALL = {"dataset": "synth_biased", "seed": 3, "k": 3, "synth": {"n": 600},
         "forest": {"n_trees": 8, "max_depth": 6}, "scan": {"restarts": 2},
         "method_params": {"lfr": {"max_iters": 60}, "pr": {"max_iters": 60}}}


@contextmanager
def temporary(method: Method):
    register(method)
    try:
        yield method
    finally:
        REGISTRY.pop(method.name, None)


def _boom(ctx, p):
    raise RuntimeError("deliberate")


def _passthrough(ctx, p):
    # y'' = y exactly, so no record changes treatment
    return Outcome(PredictionSet(ctx.test.y.copy()), {})


def _gf_like(ctx, p):
    # stand-in for a subgroup-fairness learner: its own model fitted on train
    enc_tr = encode(ctx.train, exclude=(ctx.train.schema.protected.attribute,))
    enc_te = encode(ctx.test, exclude=(ctx.test.schema.protected.attribute,))
    mu, sd = enc_tr.X.mean(0), np.where(enc_tr.X.std(0) > 0, enc_tr.X.std(0), 1.0)
    model = fit_logistic((enc_tr.X - mu) / sd, ctx.train.y, l2=1.0 / p["C"])
    labels, scores = model.predict((enc_te.X - mu) / sd)
    return Outcome(PredictionSet(labels, scores), {"C": p["C"], "gamma": p["gamma"]})


@pytest.fixture(scope="module")
def bundle():
    return run_audit(AuditConfig.from_dict(SMALL))


def test_bundle_shape(bundle):
    assert len(bundle.folds) == 3
    assert bundle.methods == ("lfr", "dir", "pr", "roc", "eo", "ceo")
    assert not bundle.failed_methods()
    for f in bundle.folds:
        assert set(f.methods) == set(bundle.methods)
        assert f.scan is not None and f.scan.q >= 1
        assert len(set(f.seeds.values())) == len(f.seeds)


def test_bundle_round_trip(bundle):
    again = AuditBundle.from_json(bundle.to_json())
    assert again == bundle
    assert again.to_json() == bundle.to_json()
    assert again.table1() == bundle.table1()


def test_determinism_across_workers(bundle):
    serial = run_audit(AuditConfig.from_dict(SMALL)).to_json()
    threaded = run_audit(AuditConfig.from_dict({**SMALL, "workers": 3})).to_json()
    assert serial == bundle.to_json()
    # workers is excluded from the hash but recorded in the config section
    strip = lambda t: {k: v for k, v in json.loads(t).items() if k != "config"}  # noqa: E731
    assert strip(threaded) == strip(serial)


def test_cli_runs_are_byte_identical(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**SMALL, "methods": ["roc", "eo", "dir"]}))
    out = tmp_path / "o"
    outs = []
    for workers in ("1", "1", "2"):
        code = cli.main(["run", "--config", str(cfg), "--out", str(out), "--workers", workers])
        assert code == cli.EXIT_OK
        outs.append((out / "bundle.json").read_bytes())
    assert outs[0] == outs[1]
    a, c = json.loads(outs[0]), json.loads(outs[2])
    assert c["folds"] == a["folds"] and c["provenance"] == a["provenance"]
    assert (out / "tables.md").read_text().count("| ROC |") == 2
    assert len(list((out / "rules").glob("*.txt"))) == 3 * 3


def test_derive_seed_independent():
    seeds = {derive_seed(1, f, n) for f in range(5) for n in ("biased", "scan", "lfr", "eo")}
    assert len(seeds) == 20
    assert derive_seed(1, 0, "lfr") == derive_seed(1, 0, "lfr")


def test_dir_zero_is_identity():
    config = AuditConfig.from_dict(SMALL)
    ds = load_dataset(config)
    plan = kfold(ds, config.k, config.seed)
    train, test, biased, _, test_pred = _fold_context(config, ds, plan, 0)
    ctx = FoldContext(train, test, biased, biased.train_predictions(), test_pred, 7)
    method = get_method("dir")
    out = method.run(ctx, method.params({"level": 0.0}))
    assert np.array_equal(out.predictions.labels, test_pred.labels)
    labels = treatment_labels(test.y, out.predictions.labels)
    assert np.array_equal(labels, treatment_labels(test.y, test_pred.labels))
    assert group_mask(test).any()


def test_removing_a_method_changes_nothing_else(bundle):
    fewer = run_audit(AuditConfig.from_dict({**SMALL, "methods": ["eo", "pr"]}))
    for a, b in zip(bundle.folds, fewer.folds):
        assert a.biased == b.biased and a.scan == b.scan
        for m in ("eo", "pr"):
            assert a.methods[m].to_dict() == b.methods[m].to_dict()
            assert a.seeds[m] == b.seeds[m]


def test_failing_method_is_isolated():
    with temporary(Method("boom", "in", _boom)):
        b = run_audit(AuditConfig.from_dict({**SMALL, "methods": ["roc", "boom"], "scan": {"enabled": False}}))
    assert b.failed_methods() == ("boom",)
    assert all(f.methods["roc"].ok for f in b.folds)
    assert all("deliberate" in f.methods["boom"].error for f in b.folds)
    assert b.table1()["boom"] is None and b.table2()["boom"] is None


def test_all_failed_raises_with_bundle():
    with temporary(Method("boom", "in", _boom)):
        with pytest.raises(AllMethodsFailed) as info:
            run_audit(AuditConfig.from_dict({**SMALL, "methods": ["boom"], "scan": {"enabled": False}}))
    assert info.value.bundle.failed_methods() == ("boom",)


def test_empty_rules_carry_flag(tmp_path):
    with temporary(Method("same", "post", _passthrough)):
        b = run_audit(AuditConfig.from_dict({**SMALL, "methods": ["same"], "scan": {"enabled": False}}))
    for f in b.folds:
        r = f.methods["same"]
        assert r.cohort.agree_ratio == 1.0
        assert len(r.rules) == 0
        assert r.rules.render().startswith("# ")


def test_gf_style_method_plugs_in():
    gf = Method("gf", "in", _gf_like, {"C": 10.0, "gamma": 0.01})
    with temporary(gf):
        cfg = AuditConfig.from_dict({**SMALL, "methods": ["gf", "roc"], "method_params": {"gf": {"C": 5.0}},
                                     "scan": {"enabled": False}})
        b = run_audit(cfg)
        with pytest.raises(ConfigError):
            AuditConfig.from_dict({**SMALL, "methods": ["gf"], "method_params": {"gf": {"nope": 1}}})
    assert not b.failed_methods()
    assert b.folds[0].methods["gf"].model == {"C": 5.0, "gamma": 0.01}
    assert "gf" not in REGISTRY


def test_method_params():
    m = get_method("roc")
    assert m.params() == {"metric": "statistical_parity", "eps": 0.05}
    assert m.params({"eps": 0.1})["eps"] == 0.1
    with pytest.raises(ValueError):
        m.params({"epsilon": 0.1})
    with pytest.raises(ValueError):
        Method("x", "mid", _boom)
    with pytest.raises(ValueError):
        register(Method("roc", "post", _boom))


@pytest.mark.parametrize("bad", [
    {"seed": 1},
    {"dataset": "synth_biased"},
    {"dataset": "synth_biased", "seed": 1, "colour": "red"},
    {"dataset": "synth_biased", "seed": 1, "methods": ["lfr", "lfr"]},
    {"dataset": "synth_biased", "seed": 1, "methods": ["gf"]},
    {"dataset": "synth_biased", "seed": 1, "k": 1},
    {"dataset": "synth_biased", "seed": 1, "scan": {"direction": "sideways"}},
    {"dataset": "synth_biased", "seed": 1, "method_params": {"pr": {"eta_max": 3}}},
    {"dataset": "adult", "seed": 1},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        AuditConfig.from_dict(bad)


def test_digest_ignores_workers_and_out():
    a = AuditConfig.from_dict(SMALL)
    b = AuditConfig.from_dict({**SMALL, "workers": 4, "out": "/tmp/x"})
    c = AuditConfig.from_dict({**SMALL, "seed": 4})
    assert a.digest() == b.digest() != c.digest()


def _write(tmp_path, d):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return str(path)


def test_exit_codes(tmp_path, capsys):
    ok = _write(tmp_path, {**SMALL, "methods": ["roc"], "scan": {"enabled": False}})
    assert cli.main(["run", "--config", ok, "--out", str(tmp_path / "o")]) == cli.EXIT_OK

    assert cli.main(["run", "--config", _write(tmp_path, {"seed": 1})]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        cli.main(["run"])
    assert exc.value.code == cli.EXIT_CONFIG

    missing = _write(tmp_path, {"dataset": "adult", "seed": 1, "path": str(tmp_path / "none.csv")})
    assert cli.main(["run", "--config", missing]) == cli.EXIT_DATA
    assert cli.main(["report", "--bundle", str(tmp_path / "none.json")]) == cli.EXIT_DATA

    with temporary(Method("boom", "in", _boom)):
        failing = _write(tmp_path, {**SMALL, "methods": ["boom"], "scan": {"enabled": False}})
        assert cli.main(["run", "--config", failing, "--out", str(tmp_path / "f")]) == cli.EXIT_ALL_FAILED
    assert (tmp_path / "f" / "bundle.json").is_file()
    assert "every configured method failed" in capsys.readouterr().err


def test_report_and_describe(tmp_path, capsys):
    cfg = _write(tmp_path, {**SMALL, "methods": ["eo"], "scan": {"enabled": False}})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    assert cli.main(["report", "--bundle", str(tmp_path / "o" / "bundle.json"), "--format", "md"]) == 0
    text = capsys.readouterr().out
    assert "| EO |" in text and "| Biased |" in text
    assert cli.main(["data", "describe", "--dataset", "synth_biased", "--seed", "2"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["n"] == 2000 and d["favorable_rate_privileged"] > d["favorable_rate_unprivileged"]


def test_scan_command(tmp_path, capsys):
    cfg = _write(tmp_path, {**SMALL, "k": 2})
    assert cli.main(["scan", "--config", cfg]) == 0
    res = json.loads(capsys.readouterr().out)
    assert [r["fold"] for r in res] == [0, 1]
    assert all(r["direction"] == "over" and r["q"] >= 1 for r in res)
