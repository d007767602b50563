"""From-scratch learners: CART trees, random forests, logistic regression
and rule extraction."""
from .linear import LinearModel, fit_logistic
from .optim import OptResult, OptSettings, minimize
from .rules import Predicate, Rule, RuleSet, extract_rules
from .tree import ColumnIndex, DecisionTree, Forest, ForestParams, TreeParams, fit_forest, fit_tree, predict

__all__ = [
    "ColumnIndex", "DecisionTree", "Forest", "ForestParams", "LinearModel", "OptResult",
    "OptSettings", "Predicate", "Rule", "RuleSet", "TreeParams", "extract_rules", "fit_forest",
    "fit_logistic", "fit_tree", "minimize", "predict",
]
