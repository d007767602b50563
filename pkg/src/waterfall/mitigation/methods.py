"""Adapters that register the six built-in methods."""
from __future__ import annotations

from ..data import group_mask
from ..learners.optim import OptSettings
from .base import FoldContext, Method, Outcome, PredictionSet, register
from .inproc import pr_fit, pr_predict
from .post import ceo_apply, ceo_fit, eo_apply, eo_fit, roc_apply, roc_fit
from .pre import LFRSettings, dir_fit, dir_transform, lfr_apply, lfr_fit


def _lfr(ctx: FoldContext, p: dict) -> Outcome:
    settings = LFRSettings(k=p["k"], a_x=p["a_x"], a_y=p["a_y"], a_z=p["a_z"],
                           max_iters=p["max_iters"], ftol=p["ftol"], seed=ctx.seed, n_init=p["n_init"])
    model = lfr_fit(ctx.train, settings)
    flags = () if model.converged else (f"optimizer stopped early: {model.message}",)
    return Outcome(lfr_apply(model, ctx.test, p["threshold"]), model.to_dict(), flags)


def _dir(ctx: FoldContext, p: dict) -> Outcome:
    repair = dir_fit(ctx.train, p["level"])
    model = ctx.retrain(dir_transform(repair, ctx.train))
    return Outcome(model.predict(dir_transform(repair, ctx.test)), repair.to_dict())


def _pr(ctx: FoldContext, p: dict) -> Outcome:
    model = pr_fit(ctx.train, p["eta"], p["l2"], OptSettings(max_iters=p["max_iters"], tol=1e-7))
    flags = () if model.converged else (f"optimizer stopped early: {model.message}",)
    return Outcome(pr_predict(model, ctx.test), model.to_dict(), flags)


def _roc(ctx: FoldContext, p: dict) -> Outcome:
    params = roc_fit(ctx.train_pred.scores, ctx.train.y, group_mask(ctx.train), p["metric"], p["eps"])
    labels = roc_apply(params, ctx.test_pred.scores, group_mask(ctx.test))
    flags = () if params.satisfied else ("fairness bound not met on fit data",)
    return Outcome(PredictionSet(labels, ctx.test_pred.scores), params.to_dict(), flags)


def _eo(ctx: FoldContext, p: dict) -> Outcome:
    mix = eo_fit(ctx.train_pred.labels, ctx.train.y, group_mask(ctx.train))
    labels = eo_apply(mix, ctx.test_pred.labels, group_mask(ctx.test), ctx.seed)
    return Outcome(PredictionSet(labels), mix.to_dict(), mix.flags)


def _ceo(ctx: FoldContext, p: dict) -> Outcome:
    mix = ceo_fit(ctx.train_pred.scores, ctx.train.y, group_mask(ctx.train), p["cost"])
    labels, scores = ceo_apply(mix, ctx.test_pred.scores, group_mask(ctx.test), ctx.seed)
    return Outcome(PredictionSet(labels, scores), mix.to_dict(), mix.flags)


register(Method("lfr", "pre", _lfr, {"k": 5, "a_x": 0.01, "a_y": 1.0, "a_z": 50.0,
                                     "max_iters": 5000, "ftol": 0.0, "threshold": 0.5, "n_init": 4}))
register(Method("dir", "pre", _dir, {"level": 1.0}))
register(Method("pr", "in", _pr, {"eta": 1.0, "l2": 0.01, "max_iters": 1000}))
register(Method("roc", "post", _roc, {"metric": "statistical_parity", "eps": 0.05}))
register(Method("eo", "post", _eo, {}))
register(Method("ceo", "post", _ceo, {"cost": "weighted"}))
