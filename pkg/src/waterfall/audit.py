"""End-to-end audit: biased model, fairness metrics, bias scan, mitigation
and the meta-classifier pass, over a stratified k-fold protocol."""
from __future__ import annotations

import hashlib
import json
import platform
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .data import (DataError, Dataset, Protected, describe, encode, group_mask, kfold,
                   load_registered, subsample, synth_biased)
from .learners.rules import RuleSet
from .learners.tree import ForestParams
from .meta import (CohortReport, MetaParams, cohort_report, explain_negative_cohort, fit_meta,
                   treatment_labels)
from .metrics import METRIC_NAMES, FairnessReport, fairness_report, mean_std
from .mitigation import REGISTRY, FoldContext, fit_biased, get_method
from .scan import ScanResult, scan

DATASETS = ("adult", "bank", "utrecht", "synth_biased")
COHORT_FIELDS = tuple(f.name for f in fields(CohortReport))


class ConfigError(ValueError):
    pass


class AllMethodsFailed(RuntimeError):
    def __init__(self, bundle):
        super().__init__("every configured method failed")
        self.bundle = bundle


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class ScanSettings:
    enabled: bool = True
    direction: str = "over"
    restarts: int = 10
    penalty: float = 0.0
    bin_numeric: bool = False


@dataclass(frozen=True)
class AuditConfig:
    dataset: str
    seed: int
    methods: tuple[str, ...] = ("lfr", "dir", "pr", "roc", "eo", "ceo")
    path: str | None = None
    label: str | None = None
    favorable: str | None = None
    protected: dict | None = None          # {"attribute", "privileged": [...]} or {"attribute", "threshold"}
    k: int = 5
    subsample: int | None = None
    synth: dict = field(default_factory=dict)
    forest: dict = field(default_factory=dict)
    biased_exclude: tuple[str, ...] | None = None   # None: leave out the protected attribute
    method_params: dict = field(default_factory=dict)
    scan: ScanSettings = ScanSettings()
    meta: dict = field(default_factory=dict)
    meta_include_protected: bool = True
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}")
        if self.dataset != "synth_biased" and not self.path:
            raise ConfigError(f"dataset {self.dataset!r} needs a csv path")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        for m in self.methods:
            if m not in REGISTRY:
                raise ConfigError(f"unknown method {m!r}; available: {sorted(REGISTRY)}")
        for m, p in self.method_params.items():
            if m not in REGISTRY:
                raise ConfigError(f"parameters given for unknown method {m!r}")
            try:
                REGISTRY[m].params(p)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        try:
            self.forest_params(0)
            MetaParams(**self.meta)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        if self.scan.direction not in ("over", "under"):
            raise ConfigError("scan.direction must be 'over' or 'under'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in d:
            raise ConfigError("config must set a seed")
        if "dataset" not in d:
            raise ConfigError("config must name a dataset")
        d = dict(d)
        try:
            if "scan" in d:
                d["scan"] = ScanSettings(**d["scan"])
            if "methods" in d:
                d["methods"] = tuple(d["methods"])
            if d.get("biased_exclude") is not None:
                d["biased_exclude"] = tuple(d["biased_exclude"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "AuditConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        if self.biased_exclude is not None:
            d["biased_exclude"] = list(self.biased_exclude)
        return d

    def digest(self) -> str:
        """Hash of everything that can change results (not workers or out)."""
        d = self.to_dict()
        d.pop("workers")
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def forest_params(self, seed: int) -> ForestParams:
        return ForestParams(**{**self.forest, "seed": seed, "n_jobs": 1})

    def protected_rule(self) -> Protected | None:
        if self.protected is None:
            return None
        p = self.protected
        if "attribute" not in p:
            raise ConfigError("protected needs an attribute")
        if "threshold" in p:
            return Protected(p["attribute"], threshold=float(p["threshold"]))
        if "privileged" in p:
            return Protected(p["attribute"], privileged_values=frozenset(map(str, p["privileged"])))
        raise ConfigError("protected needs 'privileged' values or a 'threshold'")


def derive_seed(seed: int, fold: int, name: str) -> int:
    """Independent stream per (seed, fold, task name)."""
    ss = np.random.SeedSequence([seed, fold, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def load_dataset(config: AuditConfig) -> Dataset:
    if config.dataset == "synth_biased":
        opts = {"seed": config.seed, **config.synth}
        try:
            ds = synth_biased(**opts)
        except TypeError as exc:
            raise ConfigError(f"synth: {exc}") from None
        except ValueError as exc:
            raise DataError(str(exc)) from None
        if config.protected is not None:
            raise ConfigError("synth_biased has a fixed protected attribute")
    else:
        ds = load_registered(config.dataset, config.path, config.label, config.favorable,
                             config.protected_rule())
    if config.subsample:
        ds = subsample(ds, config.subsample, derive_seed(config.seed, 0, "subsample"))
    return ds


# ---------------------------------------------------------------------------
# bundle


@dataclass(frozen=True, eq=False)
class MethodFold:
    fairness: FairnessReport | None = None
    cohort: CohortReport | None = None
    rules: RuleSet | None = None
    model: dict | None = None
    flags: tuple[str, ...] = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "fairness": None if self.fairness is None else self.fairness.to_dict(),
            "cohort": None if self.cohort is None else self.cohort.to_dict(),
            "rules": None if self.rules is None else self.rules.to_dict(),
            "model": self.model,
            "flags": list(self.flags),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MethodFold":
        return cls(
            None if d["fairness"] is None else FairnessReport.from_dict(d["fairness"]),
            None if d["cohort"] is None else CohortReport.from_dict(d["cohort"]),
            None if d["rules"] is None else RuleSet.from_dict(d["rules"]),
            d["model"], tuple(d["flags"]), d["error"],
        )


@dataclass(frozen=True, eq=False)
class FoldRecord:
    index: int
    n_train: int
    n_test: int
    seeds: dict
    biased: FairnessReport
    scan: ScanResult | None
    methods: dict  # name -> MethodFold

    def to_dict(self) -> dict:
        return {
            "index": self.index, "n_train": self.n_train, "n_test": self.n_test, "seeds": self.seeds,
            "biased": self.biased.to_dict(),
            "scan": None if self.scan is None else self.scan.to_dict(),
            "methods": {m: r.to_dict() for m, r in self.methods.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldRecord":
        return cls(d["index"], d["n_train"], d["n_test"], d["seeds"],
                   FairnessReport.from_dict(d["biased"]),
                   None if d["scan"] is None else ScanResult.from_dict(d["scan"]),
                   {m: MethodFold.from_dict(r) for m, r in d["methods"].items()})


@dataclass(frozen=True, eq=False)
class AuditBundle:
    config: dict
    provenance: dict
    dataset: dict
    folds: tuple[FoldRecord, ...]

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(self.config["methods"])

    def failed_methods(self) -> tuple[str, ...]:
        return tuple(m for m in self.methods if any(not f.methods[m].ok for f in self.folds))

    def table1(self) -> dict:
        """Row -> metric -> {"mean", "std", "n"} (None when never defined)."""
        rows = {"biased": {k: v.to_dict() for k, v in _safe_aggregate([f.biased for f in self.folds]).items()}}
        for m in self.methods:
            reps = [f.methods[m].fairness for f in self.folds if f.methods[m].ok]
            rows[m] = {k: v.to_dict() for k, v in _safe_aggregate(reps).items()} if reps else None
        return rows

    def table2(self) -> dict:
        """Method -> cohort field -> mean/std. Undefined precisions count
        as 0, as in the rendered tables."""
        rows = {}
        for m in self.methods:
            reps = [f.methods[m].cohort for f in self.folds if f.methods[m].ok]
            if not reps:
                rows[m] = None
                continue
            rows[m] = {c: mean_std([getattr(r, c) or 0.0 for r in reps]).to_dict() for c in COHORT_FIELDS}
        return rows

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "provenance": self.provenance,
            "dataset": self.dataset,
            "folds": [f.to_dict() for f in self.folds],
            "aggregate": {"table1": self.table1(), "table2": self.table2(),
                          "failed_methods": list(self.failed_methods())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "AuditBundle":
        return cls(d["config"], d["provenance"], d["dataset"],
                   tuple(FoldRecord.from_dict(f) for f in d["folds"]))

    @classmethod
    def from_json(cls, text: str) -> "AuditBundle":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, AuditBundle) and self.to_json() == other.to_json()


def _safe_aggregate(reports):
    out = {}
    for name in METRIC_NAMES:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[name] = mean_std(vals) if vals else _Undefined()
    return out


class _Undefined:
    def to_dict(self):
        return None


# ---------------------------------------------------------------------------
# running


def _run_method(name: str, ctx: FoldContext, params: dict, meta: MetaParams,
                meta_exclude: tuple[str, ...]) -> MethodFold:
    method = get_method(name)
    try:
        outcome = method.run(ctx, method.params(params))
        test = ctx.test
        mask = group_mask(test)
        y2 = outcome.predictions.labels
        report = fairness_report(test.y, y2, mask)
        labels = treatment_labels(test.y, y2, favorable=1, alphabet=(0, 1))
        enc = encode(test, exclude=meta_exclude)
        fit = fit_meta(enc.X, labels, meta)
        cohort = cohort_report(labels, fit.oof_predictions)
        rules = explain_negative_cohort(fit.tree, enc.column_names, enc.X, labels)
        flags = tuple(outcome.flags) + fit.flags
        return MethodFold(report, cohort, rules, outcome.model, flags)
    except Exception as exc:  # a failing method must not abort the others
        return MethodFold(error=f"{type(exc).__name__}: {exc}")


def _biased_exclude(config: AuditConfig, ds: Dataset) -> tuple[str, ...]:
    if config.biased_exclude is not None:
        return tuple(config.biased_exclude)
    return (ds.schema.protected.attribute,)


def _fold_context(config: AuditConfig, ds: Dataset, plan, i: int):
    tr, te = plan.train_test(i)
    train, test = ds.take(tr), ds.take(te)
    forest_seed = derive_seed(config.seed, i, "biased")
    biased = fit_biased(train, config.forest_params(forest_seed), _biased_exclude(config, ds))
    test_pred = biased.predict(test)
    return train, test, biased, forest_seed, test_pred


def _run_fold(config: AuditConfig, ds: Dataset, plan, i: int, methods) -> FoldRecord:
    train, test, biased, forest_seed, test_pred = _fold_context(config, ds, plan, i)
    seeds = {"biased": forest_seed}
    report = fairness_report(test.y, test_pred.labels, group_mask(test))

    scan_result = None
    if config.scan.enabled:
        seeds["scan"] = derive_seed(config.seed, i, "scan")
        s = config.scan
        scan_result = scan(test, test.y, test_pred.scores, s.direction, s.restarts, seeds["scan"],
                           s.penalty, s.bin_numeric)

    meta_exclude = () if config.meta_include_protected else (ds.schema.protected.attribute,)
    results = {}
    for name in methods:
        seeds[name] = derive_seed(config.seed, i, name)
        ctx = FoldContext(train, test, biased, biased.train_predictions(), test_pred, seeds[name])
        meta = MetaParams(**{**config.meta, "seed": derive_seed(config.seed, i, "meta:" + name)})
        results[name] = _run_method(name, ctx, config.method_params.get(name, {}), meta, meta_exclude)
    return FoldRecord(i, train.n, test.n, seeds, report, scan_result, results)


def provenance(config: AuditConfig) -> dict:
    import numba
    import pandas

    return {
        "config_hash": config.digest(),
        "seed": config.seed,
        "versions": {"waterfall": __version__, "numpy": np.__version__, "pandas": pandas.__version__,
                     "numba": numba.__version__, "python": platform.python_version()},
    }


def run_audit(config: AuditConfig) -> AuditBundle:
    """Run every configured method on every fold.

    Folds run concurrently when ``config.workers > 1``; all randomness is
    derived from (seed, fold, task) so the result does not depend on the
    schedule. Raises :class:`AllMethodsFailed` (carrying the bundle) when no
    method completed every fold.
    """
    ds = load_dataset(config)
    plan = kfold(ds, config.k, config.seed)
    job = lambda i: _run_fold(config, ds, plan, i, config.methods)  # noqa: E731
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            folds = tuple(pool.map(job, range(plan.k)))
    else:
        folds = tuple(job(i) for i in range(plan.k))
    bundle = AuditBundle(config.to_dict(), provenance(config), describe(ds), folds)
    # normalise through JSON so in-memory and re-loaded bundles compare equal
    bundle = AuditBundle.from_json(bundle.to_json())
    if len(bundle.failed_methods()) == len(config.methods):
        raise AllMethodsFailed(bundle)
    return bundle


def run_scan(config: AuditConfig) -> list[ScanResult]:
    """Only the biased model and bias scan, fold by fold."""
    ds = load_dataset(config)
    plan = kfold(ds, config.k, config.seed)
    s = config.scan
    out = []
    for i in range(plan.k):
        _, test, _, _, test_pred = _fold_context(config, ds, plan, i)
        out.append(scan(test, test.y, test_pred.scores, s.direction, s.restarts,
                        derive_seed(config.seed, i, "scan"), s.penalty, s.bin_numeric))
    return out
