"""Decision rules read off root-to-leaf tree paths."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree import DecisionTree


@dataclass(frozen=True)
class Predicate:
    column: int
    name: str
    op: str  # "<=" or ">"
    threshold: float

    def holds(self, X: np.ndarray) -> np.ndarray:
        v = X[:, self.column]
        return v <= self.threshold if self.op == "<=" else v > self.threshold

    def render(self) -> str:
        return f"{self.name} {self.op} {self.threshold:.2f}"


def _class_text(c) -> str:
    if isinstance(c, (np.integer, int)):
        return str(int(c))
    if isinstance(c, (np.floating, float)) and float(c).is_integer():
        return str(int(c))
    return str(c)


@dataclass(frozen=True)
class Rule:
    predicates: tuple[Predicate, ...]
    klass: object
    leaf: int
    support: int
    precision: float | None

    def fires(self, X: np.ndarray) -> np.ndarray:
        mask = np.ones(len(X), dtype=bool)
        for p in self.predicates:
            mask &= p.holds(X)
        return mask

    def render(self) -> str:
        body = " & ".join(p.render() for p in self.predicates) or "true"
        return f"{body}; [class: {_class_text(self.klass)}]"

    def to_dict(self) -> dict:
        return {
            "rule": self.render(),
            "class": _class_text(self.klass),
            "support": self.support,
            "precision": self.precision,
            "leaf": self.leaf,
            "predicates": [[p.column, p.name, p.op, p.threshold] for p in self.predicates],
        }

    @classmethod
    def from_dict(cls, d: dict, klass=None) -> "Rule":
        preds = tuple(Predicate(int(c), n, op, float(t)) for c, n, op, t in d["predicates"])
        k = d["class"] if klass is None else klass
        return cls(preds, k, int(d["leaf"]), int(d["support"]), d["precision"])


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]
    flags: tuple[str, ...] = field(default=())

    def __len__(self):
        return len(self.rules)

    def predict(self, X) -> np.ndarray:
        """Replay the rules; each row must be covered by exactly one rule."""
        X = np.asarray(X, dtype=float)
        fired = np.stack([r.fires(X) for r in self.rules])
        hits = fired.sum(axis=0)
        if not np.all(hits == 1):
            raise ValueError("rules do not partition the input: some rows fire zero or several rules")
        out = np.empty(len(X), dtype=object)
        for r, m in zip(self.rules, fired):
            out[m] = r.klass
        return out

    def render(self) -> str:
        if not self.rules:
            note = ", ".join(self.flags) or "no rules"
            return f"# {note}\n"
        return "".join(r.render() + "\n" for r in self.rules)

    def to_dict(self) -> dict:
        return {"rules": [r.to_dict() for r in self.rules], "flags": list(self.flags)}

    @classmethod
    def from_dict(cls, d: dict) -> "RuleSet":
        return cls(tuple(Rule.from_dict(r) for r in d["rules"]), tuple(d["flags"]))


def extract_rules(tree: DecisionTree, column_names, eval_X=None, eval_y=None) -> RuleSet:
    """One rule per leaf, in left-to-right leaf order.

    Support and precision are measured on ``eval_X``/``eval_y`` when given.
    """
    column_names = list(column_names)
    if len(column_names) != tree.n_features:
        raise ValueError("column_names does not match the tree's column count")
    leaf_class = tree.leaf_class()
    paths: list[tuple[int, tuple[Predicate, ...]]] = []
    stack = [(0, ())]
    while stack:
        node, preds = stack.pop()
        f = tree.feature[node]
        if f < 0:
            paths.append((node, preds))
            continue
        t = float(tree.threshold[node])
        name = column_names[f]
        stack.append((tree.right[node], preds + (Predicate(int(f), name, ">", t),)))
        stack.append((tree.left[node], preds + (Predicate(int(f), name, "<=", t),)))

    if eval_X is not None:
        leaves = tree.apply(eval_X)
        eval_y = np.asarray(eval_y)
    rules = []
    for node, preds in paths:
        klass = leaf_class[node]
        if eval_X is None:
            support, precision = int(tree.counts[node].sum()), None
        else:
            hit = leaves == node
            support = int(hit.sum())
            precision = float(np.mean(eval_y[hit] == klass)) if support else None
        rules.append(Rule(preds, klass.item() if hasattr(klass, "item") else klass, int(node),
                          support, precision))
    return RuleSet(tuple(rules))
