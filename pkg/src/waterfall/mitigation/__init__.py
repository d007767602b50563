"""Bias mitigation methods: pre-, in- and post-processing."""
from . import methods  # noqa: F401  (registers the built-in methods)
from .base import (REGISTRY, STAGES, BiasedModel, FoldContext, Method, Outcome, PredictionSet,
                   fit_biased, get_method, register)

METHODS = tuple(REGISTRY)

__all__ = ["METHODS", "REGISTRY", "STAGES", "BiasedModel", "FoldContext", "Method", "Outcome",
           "PredictionSet", "fit_biased", "get_method", "register"]
