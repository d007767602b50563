"""Shared types for mitigation methods and the method registry.

A method is a named function from a :class:`FoldContext` (one fold's train
and test splits plus the biased model's outputs on them) and a parameter
dict to a :class:`Outcome`. Pre-processing methods transform data and
retrain the biased learner, in-processing methods fit their own model on
``ctx.train``, and post-processing methods only see the biased model's
predictions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..data import Dataset, encode
from ..learners.tree import Forest, ForestParams, fit_forest

STAGES = ("pre", "in", "post")


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Hard labels (0/1, 1 = favorable) and optional scores for one split."""

    labels: np.ndarray
    scores: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels).astype(np.int64))
        if self.scores is not None:
            object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))


@dataclass(frozen=True, eq=False)
class BiasedModel:
    """The fixed base classifier: a forest over the encoded features, with
    the listed schema columns left out."""

    forest: Forest
    columns: tuple[str, ...]
    exclude: tuple[str, ...]

    def predict(self, ds: Dataset) -> PredictionSet:
        enc = encode(ds, exclude=self.exclude)
        if enc.column_names != self.columns:
            raise ValueError("dataset encoding does not match the biased model's columns")
        labels, scores = self.forest.predict(enc.X)
        return PredictionSet(labels, scores)

    def train_predictions(self) -> PredictionSet:
        """Out-of-bag predictions on the rows the forest was fitted on."""
        s = self.forest.oob_scores
        return PredictionSet((s >= 0.5).astype(np.int64), s)


def fit_biased(train: Dataset, params: ForestParams, exclude=()) -> BiasedModel:
    enc = encode(train, exclude=tuple(exclude))
    return BiasedModel(fit_forest(enc.X, train.y, params), enc.column_names, tuple(exclude))


@dataclass(frozen=True, eq=False)
class FoldContext:
    train: Dataset
    test: Dataset
    biased: BiasedModel
    train_pred: PredictionSet   # out-of-bag on train
    test_pred: PredictionSet    # y' on test
    seed: int

    def retrain(self, train: Dataset) -> BiasedModel:
        """Refit the biased learner with identical settings on new data."""
        return fit_biased(train, self.biased.forest.params, self.biased.exclude)


@dataclass(frozen=True, eq=False)
class Outcome:
    predictions: PredictionSet   # y'' on ctx.test
    model: dict                  # JSON-ready description of the fitted g
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class Method:
    name: str
    stage: str
    run: Callable[[FoldContext, dict], Outcome]
    defaults: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}")

    def params(self, overrides: dict | None = None) -> dict:
        overrides = dict(overrides or {})
        unknown = set(overrides) - set(self.defaults)
        if unknown:
            raise ValueError(f"{self.name}: unknown parameters {sorted(unknown)}")
        return {**self.defaults, **overrides}


REGISTRY: dict[str, Method] = {}


def register(method: Method) -> Method:
    if method.name in REGISTRY:
        raise ValueError(f"method {method.name!r} already registered")
    REGISTRY[method.name] = method
    return method


def get_method(name: str) -> Method:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; available: {sorted(REGISTRY)}") from None
