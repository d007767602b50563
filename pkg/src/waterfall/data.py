"""Tabular datasets: schema, CSV ingestion, one-hot encoding, splitting and
group membership.

Labels are carried as a 0/1 integer vector where 1 is the favorable outcome;
the raw label values live on the schema so they can be rendered back.
"""
from __future__ import annotations

import csv
import math
from statistics import NormalDist
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

UNKNOWN = "unknown"

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class DataError(ValueError):
    """Raised for malformed input data or schema violations."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    categories: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Protected:
    """Protected attribute and the rule that makes a record privileged.

    Either ``privileged_values`` (membership) or ``threshold`` (numeric
    ``value >= threshold``) is set.
    """

    attribute: str
    privileged_values: frozenset[str] | None = None
    threshold: float | None = None

    def __post_init__(self):
        if (self.privileged_values is None) == (self.threshold is None):
            raise DataError("protected rule needs exactly one of privileged_values or threshold")
        if self.privileged_values is not None and not self.privileged_values:
            raise DataError("privileged_values must be nonempty")

    def describe(self) -> str:
        if self.threshold is not None:
            return f"{self.attribute} >= {self.threshold:g}"
        return f"{self.attribute} in {sorted(self.privileged_values)}"


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    label_column: str
    favorable_value: str
    unfavorable_value: str
    protected: Protected

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def categorical(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == CATEGORICAL]

    @property
    def numeric(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == NUMERIC]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of typed feature columns plus a binary label vector."""

    schema: Schema
    frame: pd.DataFrame
    y: np.ndarray

    def __post_init__(self):
        if len(self.frame) == 0:
            raise DataError("dataset is empty")
        if len(self.y) != len(self.frame):
            raise DataError("label length does not match record count")
        y = np.asarray(self.y, dtype=np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.frame)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.schema, self.frame.iloc[idx].reset_index(drop=True), self.y[idx])

    def with_frame(self, frame: pd.DataFrame) -> "Dataset":
        return Dataset(self.schema, frame.reset_index(drop=True), self.y)

    def raw_labels(self) -> np.ndarray:
        s = self.schema
        return np.where(self.y == 1, s.favorable_value, s.unfavorable_value)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.y, other.y)
            and self.frame.equals(other.frame)
        )


# ---------------------------------------------------------------------------
# construction and validation


def _coerce_numeric(values: pd.Series, name: str) -> pd.Series:
    if values.dtype == bool:
        return values.astype(float)
    if values.dtype == object:
        lowered = values.astype(str).str.strip().str.lower()
        if lowered.isin(["true", "false"]).all():
            return (lowered == "true").astype(float)
    out = pd.to_numeric(values, errors="coerce")
    bad = out.isna()
    if bad.any():
        example = values[bad].iloc[0]
        raise DataError(f"column {name!r}: unparseable numeric value {example!r}")
    return out.astype(float)


def _clean_categorical(values: pd.Series) -> pd.Series:
    out = values.astype(object).where(values.notna(), UNKNOWN)
    out = out.map(lambda v: str(v).strip())
    return out.where(~out.isin(["", "?", "nan", "NaN", "None"]), UNKNOWN)


def build_dataset(
    frame: pd.DataFrame,
    label: str,
    favorable: str,
    protected: Protected,
    numeric: Sequence[str] = (),
    categorical: Sequence[str] = (),
) -> Dataset:
    """Type, validate and freeze a raw frame into a Dataset.

    Categories are the sorted observed values, so ordering is stable across
    runs and independent of row order.
    """
    missing = [c for c in [label, *numeric, *categorical] if c not in frame.columns]
    if missing:
        raise DataError(f"missing columns: {missing}")
    if protected.attribute not in list(numeric) + list(categorical):
        raise DataError(f"protected attribute {protected.attribute!r} is not a feature column")

    raw_label = frame[label].map(lambda v: str(v).strip())
    observed = sorted(set(raw_label))
    favorable = str(favorable)
    if len(observed) != 2 or favorable not in observed:
        raise DataError(f"label {label!r} must be binary and contain {favorable!r}; got {observed}")
    unfavorable = next(v for v in observed if v != favorable)

    cols: list[Column] = []
    data = {}
    for name in frame.columns:
        if name in numeric:
            data[name] = _coerce_numeric(frame[name], name).to_numpy()
            cols.append(Column(name, NUMERIC))
        elif name in categorical:
            values = _clean_categorical(frame[name])
            data[name] = values.to_numpy(dtype=object)
            cols.append(Column(name, CATEGORICAL, tuple(sorted(set(values)))))
    feature_frame = pd.DataFrame(data, columns=[c.name for c in cols])

    schema = Schema(tuple(cols), label, favorable, unfavorable, protected)
    ds = Dataset(schema, feature_frame, (raw_label == favorable).to_numpy().astype(np.int8))
    mask = group_mask(ds)
    if mask.all() or not mask.any():
        raise DataError(f"protected rule {protected.describe()} does not split the data into two groups")
    return ds


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class Registered:
    numeric: tuple[str, ...]
    categorical: tuple[str, ...]
    label: str
    favorable: str
    protected: Protected
    dedupe: bool = False
    label_map: dict = field(default_factory=dict)


_ADULT_NUMERIC = ("age", "fnlwgt", "education-num", "capital-gain", "capital-loss", "hours-per-week")
_ADULT_CATEGORICAL = ("workclass", "education", "Marital-status", "occupation", "relationship",
                      "race", "sex", "native-country")

REGISTRY: dict[str, Registered] = {
    "adult": Registered(
        numeric=_ADULT_NUMERIC,
        categorical=_ADULT_CATEGORICAL,
        label="income",
        favorable=">50K",
        protected=Protected("race", privileged_values=frozenset({"White"})),
        dedupe=True,
    ),
    "bank": Registered(
        numeric=("age", "balance", "day", "duration", "campaign", "pdays", "previous"),
        categorical=("job", "marital", "education", "default", "housing", "loan", "contact",
                     "month", "poutcome"),
        label="y",
        favorable="yes",
        protected=Protected("age", threshold=25.0),
    ),
    "utrecht": Registered(
        numeric=("age", "ind-university_grade", "ind-debateclub", "ind-programming_exp",
                 "ind-international_exp", "ind-entrepeneur_exp", "ind-languages", "ind-exact_study"),
        categorical=("gender", "nationality", "sport", "ind-degree", "company"),
        label="decision",
        favorable="hired",
        protected=Protected("gender", privileged_values=frozenset({"male"})),
        label_map={"true": "hired", "1": "hired", "hired": "hired",
                   "false": "not hired", "0": "not hired", "not hired": "not hired"},
    ),
}


def _canonical(name: str) -> str:
    return name.strip().lower().replace(".", "-").replace("_", "-").replace(" ", "-")


def read_csv(path: str | Path) -> pd.DataFrame:
    """Read a headered CSV as strings. The delimiter is sniffed (bank ships with ';')."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            head = fh.read(65536)
        try:
            delimiter = csv.Sniffer().sniff(head, delimiters=",;\t").delimiter
        except csv.Error:
            delimiter = ","
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False,
                            skipinitialspace=True)
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    frame.columns = [c.strip().strip('"') for c in frame.columns]
    return frame


def load_registered(
    name: str,
    path: str | Path,
    label: str | None = None,
    favorable: str | None = None,
    protected: Protected | None = None,
) -> Dataset:
    """Load one of the registered datasets (adult, bank, utrecht) from CSV."""
    if name not in REGISTRY:
        raise DataError(f"unknown dataset {name!r}; registered: {sorted(REGISTRY)}")
    reg = REGISTRY[name]
    frame = read_csv(path)

    wanted = {_canonical(c): c for c in (*reg.numeric, *reg.categorical, reg.label)}
    if label is not None:
        wanted.setdefault(_canonical(label), label)
    rename = {}
    for col in frame.columns:
        key = _canonical(col)
        if key in wanted:
            rename[col] = wanted[key]
    frame = frame.rename(columns=rename)
    absent = [c for c in wanted.values() if c not in frame.columns]
    if absent:
        raise DataError(f"{name}: missing registered columns {absent}")
    frame = frame[[c for c in wanted.values()]]

    label_col = label or reg.label
    frame = frame.apply(lambda s: s.str.strip())
    lab = frame[label_col].str.rstrip(".")
    if reg.label_map and label is None:
        lab = lab.map(lambda v: reg.label_map.get(v.lower(), v))
    frame[label_col] = lab

    if reg.dedupe:
        frame = frame.drop_duplicates().reset_index(drop=True)

    numeric = [c for c in reg.numeric if c != label_col]
    categorical = [c for c in reg.categorical if c != label_col]
    return build_dataset(frame, label_col, favorable or reg.favorable, protected or reg.protected,
                         numeric, categorical)


# ---------------------------------------------------------------------------
# encoding


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    X: np.ndarray
    column_names: tuple[str, ...]
    source: tuple[str, ...]  # schema column each encoded column came from


def encode(ds: Dataset, exclude: Iterable[str] = ()) -> EncodedMatrix:
    """One-hot encode categoricals (``col_value``); numerics pass through."""
    exclude = set(exclude)
    blocks, names, source = [], [], []
    for col in ds.schema.columns:
        if col.name in exclude:
            continue
        values = ds.frame[col.name].to_numpy()
        if col.kind == NUMERIC:
            blocks.append(values.astype(float)[:, None])
            names.append(col.name)
            source.append(col.name)
        else:
            cats = np.asarray(col.categories, dtype=object)
            blocks.append((values[:, None] == cats[None, :]).astype(float))
            names.extend(f"{col.name}_{c}" for c in col.categories)
            source.extend([col.name] * len(cats))
    X = np.hstack(blocks) if blocks else np.zeros((ds.n, 0))
    X = np.ascontiguousarray(X)
    X.setflags(write=False)
    return EncodedMatrix(X, tuple(names), tuple(source))


# ---------------------------------------------------------------------------
# groups


def group_mask(ds: Dataset) -> np.ndarray:
    """True where the record belongs to the privileged group."""
    p = ds.schema.protected
    values = ds.frame[p.attribute].to_numpy()
    if p.threshold is not None:
        return values.astype(float) >= p.threshold
    return np.isin(values.astype(str), list(p.privileged_values))


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True, eq=False)
class SplitPlan:
    folds: tuple[np.ndarray, ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.folds[i]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, test


def split_indices(y: np.ndarray, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    strata = [np.flatnonzero(y == c) for c in classes]
    for c, s in zip(classes, strata):
        if len(s) < 2:
            raise DataError(f"stratum for label {c!r} has fewer than 2 records")
    n_train = int(round(train_fraction * len(y)))
    # largest-remainder allocation keeps the overall train size exact
    quotas = np.array([train_fraction * len(s) for s in strata])
    alloc = np.floor(quotas).astype(int)
    order = np.argsort(-(quotas - alloc), kind="stable")
    for j in order[: n_train - alloc.sum()]:
        alloc[j] += 1
    train, test = [], []
    for s, a in zip(strata, alloc):
        s = rng.permutation(s)
        train.append(s[:a])
        test.append(s[a:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(ds: Dataset, train_fraction: float = 0.67, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified random train/test split."""
    tr, te = split_indices(ds.y, train_fraction, seed)
    return ds.take(tr), ds.take(te)


def kfold_indices(y: np.ndarray, k: int, seed: int) -> SplitPlan:
    n = len(y)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise DataError(f"k={k} exceeds record count {n}")
    rng = np.random.default_rng(seed)
    y = np.asarray(y)
    buckets: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    # deal each stratum round-robin, carrying the position across strata so
    # fold sizes never differ by more than one
    for c in np.unique(y):
        for i in rng.permutation(np.flatnonzero(y == c)):
            buckets[pos % k].append(int(i))
            pos += 1
    return SplitPlan(tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets), seed)


def kfold(ds: Dataset, k: int = 5, seed: int = 0) -> SplitPlan:
    """Stratified k-fold plan over the dataset's records."""
    return kfold_indices(ds.y, k, seed)


def subsample(ds: Dataset, n: int, seed: int) -> Dataset:
    if n >= ds.n:
        return ds
    idx = np.sort(np.random.default_rng(seed).choice(ds.n, size=n, replace=False))
    return ds.take(idx)


# ---------------------------------------------------------------------------
# synthetic fixture

SYNTH_PLANT = {"group": "unpriv", "region": "r3"}


def synth_biased(n: int = 2000, bias_gap: float = 0.2, seed: int = 0, planted: bool = False) -> Dataset:
    """Two-group dataset whose favorable rate is ``bias_gap`` lower for the
    unprivileged group.

    Labels come from thresholding a latent score ``x1 + noise`` at a
    group-specific quantile, so the per-group favorable rates hold exactly in
    expectation. ``x2`` is a proxy for the group, ``x3`` is noise, ``band``
    tracks the latent score and ``region`` is noise. With ``planted`` the
    unprivileged records in region ``r3`` get their favorable rate doubled.
    """
    if n < 20:
        raise ValueError("n must be at least 20")
    if not 0 <= bias_gap <= 1:
        raise ValueError("bias_gap must lie in [0, 1]")
    rate_priv = 0.5 + bias_gap / 2
    rate_unpriv = 0.5 - bias_gap / 2

    rng = np.random.default_rng(seed)
    priv = rng.random(n) < 0.6
    x1 = rng.normal(size=n)
    latent = x1 + 0.5 * rng.normal(size=n)
    sd = math.sqrt(1.25)
    region = rng.choice(np.array(["r1", "r2", "r3", "r4"]), size=n)
    rate = np.where(priv, rate_priv, rate_unpriv)
    if planted:
        rate = np.where(~priv & (region == "r3"), np.minimum(2 * rate, 1.0), rate)
    z = NormalDist()
    cut = np.array([z.inv_cdf(1 - r) * sd if 0 < r < 1 else (-np.inf if r >= 1 else np.inf)
                    for r in rate])
    y = (latent > cut).astype(np.int8)

    x2 = np.where(priv, 0.5, -0.5) + rng.normal(size=n)
    x3 = rng.normal(size=n)
    noisy = latent + rng.normal(scale=0.8, size=n)
    band = np.where(noisy < -0.5, "low", np.where(noisy < 0.5, "mid", "high"))
    frame = pd.DataFrame({
        "x1": np.round(x1, 6),
        "x2": np.round(x2, 6),
        "x3": np.round(x3, 6),
        "band": band,
        "region": region,
        "group": np.where(priv, "priv", "unpriv"),
        "label": np.where(y == 1, "yes", "no"),
    })
    return build_dataset(frame, "label", "yes", Protected("group", privileged_values=frozenset({"priv"})),
                         numeric=["x1", "x2", "x3"], categorical=["band", "region", "group"])


def describe(ds: Dataset) -> dict:
    mask = group_mask(ds)
    return {
        "n": ds.n,
        "label": ds.schema.label_column,
        "favorable": ds.schema.favorable_value,
        "favorable_rate": float(ds.y.mean()),
        "protected": ds.schema.protected.describe(),
        "privileged_fraction": float(mask.mean()),
        "favorable_rate_privileged": float(ds.y[mask].mean()),
        "favorable_rate_unprivileged": float(ds.y[~mask].mean()),
        "numeric": ds.schema.numeric,
        "categorical": {c.name: len(c.categories) for c in ds.schema.columns if c.kind == CATEGORICAL},
    }
