# %% [markdown]
# # One fold by hand
#
# Walk a single train/test split through the pipeline without the
# orchestrator: biased forest, group metrics, one post-processing method,
# treatment-change labels, the meta tree and its negative-cohort rules.
# Runs on the synthetic generator so it needs no downloads.

# %%
import numpy as np

from waterfall.data import describe, encode, group_mask, split, synth_biased
from waterfall.learners.tree import ForestParams
from waterfall.meta import MetaParams, cohort_report, explain_negative_cohort, fit_meta, treatment_labels
from waterfall.metrics import fairness_report
from waterfall.mitigation import fit_biased
from waterfall.mitigation.post import roc_apply, roc_fit

ds = synth_biased(4000, bias_gap=0.25, seed=7)
print(describe(ds))

# %%
train, test = split(ds, 0.7, seed=7)
biased = fit_biased(train, ForestParams(n_trees=50, seed=7), exclude=("group",))
y_prime = biased.predict(test)
print(fairness_report(test.y, y_prime.labels, group_mask(test)))

# %% [markdown]
# The forest never sees `group`, but `x2` is a proxy for it, so the
# unprivileged group still gets fewer favorable predictions.
#
# Reject option classification is fitted on out-of-bag scores for the
# training rows (in-bag scores of a deep forest are nearly perfect and
# would leave nothing to correct), then applied to the test scores.

# %%
oob = biased.train_predictions()
params = roc_fit(oob.scores, train.y, group_mask(train), eps=0.05)
y_mitigated = roc_apply(params, y_prime.scores, group_mask(test))
print(params)
print(fairness_report(test.y, y_mitigated, group_mask(test)))

# %% [markdown]
# Treatment-change labels compare the mitigated outcome with the ground
# truth: +1 gained the favorable outcome, -1 lost it, 0 unchanged.

# %%
labels = treatment_labels(test.y, y_mitigated)
print({v: int(np.sum(labels == v)) for v in (-1, 0, 1)})

enc = encode(test)
fit = fit_meta(enc.X, labels, MetaParams(seed=7))
report = cohort_report(labels, fit.oof_predictions)
print(report.markdown_row("ROC"))

# %%
rules = explain_negative_cohort(fit.tree, enc.column_names, enc.X, labels)
print(rules.render())
