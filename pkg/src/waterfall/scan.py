"""Multi-dimensional subset scan over categorical attributes.

Finds the subgroup (a conjunction of per-attribute value sets) whose
observed outcomes diverge most from the model's expected probabilities,
measured by the Bernoulli expectation-based likelihood-ratio statistic.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _scan_kernels as _k
from .data import CATEGORICAL, NUMERIC, Dataset

DIRECTIONS = ("over", "under")
Q_MAX = 20.0
P_CLIP = (0.01, 0.99)
POLISH_TOP = 5   # distinct restart fixed points that get the lookahead pass
EXHAUSTIVE_LIMIT = 10**6


class ScanError(ValueError):
    pass


@dataclass(frozen=True)
class Subgroup:
    """Attribute -> allowed values; absent attributes are unrestricted."""

    constraints: tuple[tuple[str, tuple[str, ...]], ...] = ()

    @classmethod
    def of(cls, mapping: dict) -> "Subgroup":
        items = []
        for attr in sorted(mapping):
            values = tuple(sorted(str(v) for v in mapping[attr]))
            if not values:
                raise ValueError(f"empty value set for {attr!r}")
            items.append((attr, values))
        return cls(tuple(items))

    def as_dict(self) -> dict[str, list[str]]:
        return {a: list(v) for a, v in self.constraints}

    def describe(self) -> str:
        if not self.constraints:
            return "(all records)"
        return " & ".join(f"{a} in {{{', '.join(v)}}}" for a, v in self.constraints)

    def n_values(self) -> int:
        return sum(len(v) for _, v in self.constraints)

    def mask(self, frame) -> np.ndarray:
        m = np.ones(len(frame), dtype=bool)
        for a, v in self.constraints:
            m &= np.isin(frame[a].astype(str).to_numpy(), v)
        return m

    def contains(self, other: "Subgroup") -> bool:
        """True when every record matching ``other`` also matches self."""
        mine = dict(self.constraints)
        theirs = dict(other.constraints)
        for a, vals in mine.items():
            if a not in theirs or not set(theirs[a]) <= set(vals):
                return False
        return True


@dataclass(frozen=True)
class ScanResult:
    subgroup: Subgroup
    score: float
    q: float
    direction: str
    n: int
    penalized_score: float

    def to_dict(self) -> dict:
        return {"subgroup": self.subgroup.as_dict(), "score": self.score, "q": self.q,
                "direction": self.direction, "n": self.n, "penalized_score": self.penalized_score}

    @classmethod
    def from_dict(cls, d: dict) -> "ScanResult":
        return cls(Subgroup.of(d["subgroup"]), d["score"], d["q"], d["direction"], d["n"],
                   d.get("penalized_score", d["score"]))


# ---------------------------------------------------------------------------
# scoring


def bernoulli_score(y, p, q: float) -> float:
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("expected probabilities must lie strictly inside (0, 1)")
    if q <= 0:
        raise ValueError("q must be positive")
    return float(y.sum() * math.log(q) - np.sum(np.log1p(p * (q - 1.0))))


def default_bounds(direction: str) -> tuple[float, float]:
    if direction == "over":
        return 1.0, Q_MAX
    if direction == "under":
        return 1.0 / Q_MAX, 1.0
    raise ValueError(f"direction must be one of {DIRECTIONS}")


def optimal_q(y, p, direction: str = "over", q_bounds=None) -> tuple[float, float]:
    """Maximize the score over q within bounds.

    The score is concave in ln q, so the maximizer is where its derivative
    changes sign; located by bisection on ln q.
    """
    lo_q, hi_q = default_bounds(direction) if q_bounds is None else q_bounds
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(y) == 0:
        return 1.0, 0.0
    r = _k.peak(float(y.sum()), p, math.log(lo_q), math.log(hi_q))
    q = math.exp(r)
    return q, bernoulli_score(y, p, q)


# ---------------------------------------------------------------------------
# search


def scan_attributes(ds: Dataset, bin_numeric: bool = False) -> dict[str, np.ndarray]:
    """String-valued columns to scan; numerics are quartile-binned on request."""
    out = {}
    for col in ds.schema.columns:
        if col.kind == CATEGORICAL:
            out[col.name] = ds.frame[col.name].astype(str).to_numpy()
        elif col.kind == NUMERIC and bin_numeric:
            x = ds.frame[col.name].to_numpy(dtype=float)
            edges = np.unique(np.quantile(x, [0.25, 0.5, 0.75]))
            out[col.name] = np.array([f"q{b + 1}" for b in np.searchsorted(edges, x, side="left")])
    if not out:
        raise ScanError("no categorical attributes to scan")
    return out


class _Problem:
    def __init__(self, attrs: dict[str, np.ndarray], y, p, direction, penalty):
        if direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        self.names = sorted(attrs)
        self.values = {a: tuple(sorted(set(attrs[a]))) for a in self.names}
        self.codes = {a: np.searchsorted(np.array(self.values[a]), attrs[a]) for a in self.names}
        self.y = np.asarray(y, dtype=float)
        self.p = np.clip(np.asarray(p, dtype=float), *P_CLIP)
        if len(self.y) != len(self.p) or len(self.y) != len(next(iter(attrs.values()))):
            raise ValueError("y, p and attributes must have equal lengths")
        self.direction = direction
        self.penalty = float(penalty)

    def mask(self, state: dict, skip: str | None = None) -> np.ndarray:
        m = np.ones(len(self.y), dtype=bool)
        for a, allowed in state.items():
            if a != skip and allowed is not None:
                m &= allowed[self.codes[a]]
        return m

    def cost(self, state: dict) -> float:
        k = sum(int(v.sum()) for v in state.values() if v is not None)
        return 0.0 if k == 0 else self.penalty * k

    def evaluate(self, m: np.ndarray) -> tuple[float, float]:
        return optimal_q(self.y[m], self.p[m], self.direction)

    def penalized(self, state: dict) -> float:
        return self.evaluate(self.mask(state))[1] - self.cost(state)

    def subgroup(self, state: dict) -> Subgroup:
        return Subgroup.of({a: [v for v, keep in zip(self.values[a], allowed) if keep]
                            for a, allowed in state.items() if allowed is not None})

    def result(self, state: dict) -> ScanResult:
        sg = self.subgroup(state)
        m = self.mask(state)
        q, score = self.evaluate(m)
        return ScanResult(sg, score, q, self.direction, int(m.sum()), score - self.cost(state))


def _best_for_attribute(prob: _Problem, state: dict, attr: str):
    """Exact best value set for ``attr`` with the other attributes fixed.

    For a fixed q the best set is every value whose own score contribution
    exceeds the per-value penalty. Each contribution is concave in ln q, so
    it exceeds the penalty on one interval; sweeping the interval endpoints
    yields every set that can be optimal for some q. The unrestricted option
    (no penalty for this attribute) is always a candidate.
    """
    base = prob.mask(state, skip=attr)
    k = len(prob.values[attr])
    codes = prob.codes[attr][base]
    p = prob.p[base]
    Y = np.bincount(codes, weights=prob.y[base], minlength=k)
    order = np.argsort(codes, kind="stable")
    starts = np.searchsorted(codes[order], np.arange(k + 1))
    lo, hi = (math.log(b) for b in default_bounds(prob.direction))
    c = prob.penalty
    top, left, right = _k.value_intervals(order, starts, Y, p, lo, hi, c)
    ok = top > c

    fixed_vals = sum(int(v.sum()) for a, v in state.items() if a != attr and v is not None)
    best_state = {**state, attr: None}
    best_val = prob.evaluate(base)[1] - prob.penalty * fixed_vals
    points = np.unique(np.concatenate([[lo, hi], left[ok], right[ok]]))
    seen = set()
    for r in 0.5 * (points[:-1] + points[1:]):
        allowed = ok & (left <= r) & (r <= right)
        key = allowed.tobytes()
        if key in seen or not allowed.any() or allowed.all():
            continue
        seen.add(key)
        val = prob.evaluate(base & allowed[prob.codes[attr]])[1] - prob.penalty * (fixed_vals + int(allowed.sum()))
        if val > best_val:
            best_state, best_val = {**state, attr: allowed}, val
    return best_state, best_val


def ascend(prob: _Problem, state: dict, rng: np.random.Generator, max_passes: int = 100):
    """Conditional ascent to a fixed point; returns (state, trace of
    penalized scores after each accepted step)."""
    current = prob.penalized(state)
    trace = [current]
    for _ in range(max_passes):
        improved = False
        for attr in rng.permutation(prob.names):
            cand, val = _best_for_attribute(prob, state, str(attr))
            if val > current + 1e-12:
                state, current = cand, val
                trace.append(current)
                improved = True
        if not improved:
            break
    return state, trace


def _random_state(prob: _Problem, rng) -> dict:
    state = {}
    for a in prob.names:
        keep = rng.random(len(prob.values[a])) < 0.5
        state[a] = keep if keep.any() and not keep.all() else None
    return state


def _record_cell(prob: _Problem, rng) -> dict:
    # the one-value-per-attribute cell of a random record; never empty
    i = int(rng.integers(len(prob.y)))
    return {a: np.arange(len(prob.values[a])) == prob.codes[a][i] if len(prob.values[a]) > 1 else None
            for a in prob.names}


def _pick(results: list[ScanResult]) -> ScanResult:
    return min(results, key=lambda r: (-round(r.penalized_score, 10), r.subgroup.describe()))


def _same(a, b) -> bool:
    return (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))


def polish(prob: _Problem, state: dict, rng: np.random.Generator, max_rounds: int = 50):
    """Escape a conditional-ascent fixed point by one-move lookahead.

    Each attribute is in turn reset to every single value (or to
    unrestricted) and ascent is rerun from there; the first move that ends
    higher is kept and the sweep starts over. Returns (state, trace).
    """
    current = prob.penalized(state)
    trace = [current]
    for _ in range(max_rounds):
        moved = False
        for attr in rng.permutation(prob.names):
            attr = str(attr)
            k = len(prob.values[attr])
            options = [None] + [np.arange(k) == v for v in range(k)] if k > 1 else []
            for opt in options:
                if _same(opt, state[attr]):
                    continue
                cand, _ = ascend(prob, {**state, attr: opt}, rng)
                val = prob.penalized(cand)
                if val > current + 1e-12:
                    state, current, moved = cand, val, True
                    trace.append(current)
                    break
            if moved:
                break
        if not moved:
            break
    return state, trace


def scan(ds: Dataset, y, p, direction: str = "over", restarts: int = 10, seed: int = 0,
         penalty: float = 0.0, bin_numeric: bool = False) -> ScanResult:
    """Best subgroup over ``restarts`` seeded runs of conditional ascent.

    The first run starts from the unrestricted subgroup, later runs
    alternate between random value subsets and the single cell of a random
    record. The few best distinct fixed points are then
    polished with a lookahead search (see :func:`polish`).
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    prob = _Problem(scan_attributes(ds, bin_numeric), y, p, direction, penalty)
    results = []
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        if r == 0:
            start = {a: None for a in prob.names}
        elif r % 2:
            start = _random_state(prob, rng)
        else:
            start = _record_cell(prob, rng)
        state, _ = ascend(prob, start, rng)
        results.append((prob.result(state), state))
    results.sort(key=lambda rs: (-round(rs[0].penalized_score, 10), rs[0].subgroup.describe()))
    seen, finals = set(), []
    for res, state in results:
        key = res.subgroup.describe()
        if key in seen:
            continue
        seen.add(key)
        state, _ = polish(prob, state, np.random.default_rng([seed, restarts, len(finals)]))
        finals += [res, prob.result(state)]
        if len(seen) == POLISH_TOP:
            break
    return _pick(finals)


def exhaustive_scan(ds: Dataset, y, p, direction: str = "over", penalty: float = 0.0,
                    bin_numeric: bool = False) -> ScanResult:
    """Exact maximizer over every combination of nonempty value subsets
    (the full set meaning unrestricted)."""
    prob = _Problem(scan_attributes(ds, bin_numeric), y, p, direction, penalty)
    sizes = [len(prob.values[a]) for a in prob.names]
    total = math.prod(2**k - 1 for k in sizes)
    if total > EXHAUSTIVE_LIMIT:
        raise ScanError(f"search space of {total} subgroups exceeds {EXHAUSTIVE_LIMIT}")
    options = []
    for a, k in zip(prob.names, sizes):
        opts = []
        for bits in range(1, 2**k):
            allowed = np.array([(bits >> i) & 1 for i in range(k)], dtype=bool)
            opts.append(None if allowed.all() else allowed)
        options.append(opts)
    results = []
    best_val = -np.inf
    for combo in itertools.product(*options):
        state = dict(zip(prob.names, combo))
        val = prob.penalized(state)
        if val >= best_val - 1e-10:
            if val > best_val + 1e-10:
                results = []
            best_val = max(best_val, val)
            results.append(prob.result(state))
    return _pick(results)


def count_subgroups(ds: Dataset, bin_numeric: bool = False) -> int:
    attrs = scan_attributes(ds, bin_numeric)
    return math.prod(2 ** len(set(v)) - 1 for v in attrs.values())
