"""Rules, coverage semantics and candidate rule mining.

A rule is a conjunction of conditions; a rule set covers an instance when
any of its rules does. Candidate pools for the positive and negative rule
sets are mined with FP-growth and pruned by the minimum-support bound
derived from the rule-set objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .data import CATEGORICAL, BinaryDataset, FeatureTable

OPERATORS = ("==", "!=", "<=", ">")


class SchemaError(KeyError):
    """A rule refers to a feature the data does not have, or misuses its kind."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class Condition:
    feature: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise ValueError(f"unknown operator {self.op!r}")
        if self.op in ("<=", ">"):
            object.__setattr__(self, "value", float(self.value))

    def __str__(self):
        v = repr(self.value) if isinstance(self.value, float) else str(self.value)
        return f"{self.feature}{self.op}{v}"

    def holds(self, x) -> bool:
        """Evaluate on a single cell value."""
        if self.op in ("<=", ">"):
            try:
                v = float(x)
            except (TypeError, ValueError):
                raise SchemaError(f"condition {self} needs a numeric value, got {x!r}") from None
            return v <= self.value if self.op == "<=" else v > self.value
        eq = _cell_equal(x, self.value)
        return eq if self.op == "==" else not eq

    def evaluate(self, column: np.ndarray, kind: str) -> np.ndarray:
        """Evaluate on a whole column of the given kind."""
        if self.op in ("<=", ">"):
            if kind == CATEGORICAL:
                raise SchemaError(f"condition {self} applied to categorical "
                                  f"feature {self.feature!r}")
            return column <= self.value if self.op == "<=" else column > self.value
        if kind == CATEGORICAL:
            eq = column == str(self.value)
        else:
            try:
                eq = column == float(self.value)
            except (TypeError, ValueError):
                eq = np.zeros(len(column), dtype=bool)
        return eq if self.op == "==" else ~eq

    def to_dict(self) -> dict:
        return {"feature": self.feature, "op": self.op, "value": self.value}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Condition":
        return cls(d["feature"], d["op"], d["value"])


def _cell_equal(x, value) -> bool:
    if isinstance(x, str):
        return x == str(value)
    try:
        return float(x) == float(value)
    except (TypeError, ValueError):
        return False


@dataclass(frozen=True)
class Rule:
    conditions: tuple[Condition, ...]

    def __post_init__(self):
        conds = tuple(self.conditions)
        if not conds:
            raise ValueError("a rule needs at least one condition")
        if len(set(conds)) != len(conds):
            raise ValueError("rule conditions must be pairwise distinct")
        object.__setattr__(self, "conditions", conds)

    @property
    def length(self) -> int:
        return len(self.conditions)

    def __len__(self):
        return len(self.conditions)

    def __str__(self):
        return " AND ".join(str(c) for c in self.conditions)

    def to_list(self) -> list:
        return [c.to_dict() for c in self.conditions]

    @classmethod
    def from_list(cls, items: Sequence[Mapping]) -> "Rule":
        return cls(tuple(Condition.from_dict(c) for c in items))


def covers_rule(r: Rule, x: Mapping) -> bool:
    """True when instance ``x`` (feature name -> value) satisfies every condition."""
    for c in r.conditions:
        if c.feature not in x:
            raise SchemaError(f"instance has no feature {c.feature!r}")
    return all(c.holds(x[c.feature]) for c in r.conditions)


def covers_set(rules: Iterable[Rule], x: Mapping) -> bool:
    return any(covers_rule(r, x) for r in rules)


def condition_bits(c: Condition, data) -> np.ndarray:
    if isinstance(data, BinaryDataset):
        try:
            return data.condition_bits(c)
        except KeyError:
            raise SchemaError(f"condition {c} is not part of the binarization") from None
    try:
        col, kind = data.column(c.feature), data.kind(c.feature)
    except KeyError:
        raise SchemaError(f"data has no feature {c.feature!r}") from None
    return c.evaluate(col, kind)


def rule_coverage(r: Rule, data) -> np.ndarray:
    """Boolean vector: which instances of ``data`` the rule covers."""
    out = condition_bits(r.conditions[0], data).copy()
    for c in r.conditions[1:]:
        out &= condition_bits(c, data)
    return out


def set_coverage(rules: Iterable[Rule], data) -> np.ndarray:
    n = data.n
    out = np.zeros(n, dtype=bool)
    for r in rules:
        out |= rule_coverage(r, data)
    return out


def support(rules, data) -> int:
    """Number of instances covered by a rule or a rule set."""
    if isinstance(rules, Rule):
        rules = (rules,)
    return int(set_coverage(rules, data).sum())


def precision(r: Rule, data, cls: int) -> float:
    """Fraction of covered instances whose true label is ``cls`` (0 if none covered)."""
    cov = rule_coverage(r, data)
    s = int(cov.sum())
    if s == 0:
        return 0.0
    return float(np.sum(data.labels[cov] == cls)) / s


def min_support_bounds(n: int, alpha1: float, alpha2: float) -> tuple[int, int]:
    """Integer support floors for positive and negative rules.

    Rules below ``ceil(n * alpha1)`` (positive) or
    ``ceil(n * alpha1 / (1 - alpha2))`` (negative) are pruned from the pools.
    """
    if alpha2 >= 1:
        raise ValueError("alpha2 must be < 1 for the negative support bound")
    if alpha1 < 0 or alpha2 < 0:
        raise ValueError("alpha1 and alpha2 must be non-negative")
    pos = math.ceil(_snap(n * alpha1))
    neg = math.ceil(_snap(n * alpha1 / (1.0 - alpha2)))
    return pos, max(neg, pos)


def _snap(v: float) -> float:
    # 1000 * 0.005 evaluates to 5.000000000000001; keep exact integers exact
    r = round(v)
    return float(r) if abs(v - r) <= 1e-9 * max(1.0, abs(v)) else v


# ---------------------------------------------------------------------------
# FP-growth


class _Node:
    __slots__ = ("item", "count", "parent", "children", "link")

    def __init__(self, item, parent):
        self.item = item
        self.count = 0
        self.parent = parent
        self.children = {}
        self.link = None


class _FPTree:
    def __init__(self):
        self.root = _Node(None, None)
        self.heads: dict[int, _Node] = {}
        self.counts: dict[int, int] = {}

    def add(self, items: Sequence[int], count: int = 1) -> None:
        node = self.root
        for it in items:
            child = node.children.get(it)
            if child is None:
                child = _Node(it, node)
                node.children[it] = child
                child.link = self.heads.get(it)
                self.heads[it] = child
            child.count += count
            self.counts[it] = self.counts.get(it, 0) + count
            node = child

    def prefix_paths(self, item: int) -> Iterator[tuple[list[int], int]]:
        node = self.heads.get(item)
        while node is not None:
            path = []
            p = node.parent
            while p.item is not None:
                path.append(p.item)
                p = p.parent
            path.reverse()
            yield path, node.count
            node = node.link


def _build_tree(weighted: Iterable[tuple[Sequence[int], int]], min_count: int) -> _FPTree:
    weighted = list(weighted)
    freq: dict[int, int] = {}
    for items, c in weighted:
        for it in items:
            freq[it] = freq.get(it, 0) + c
    keep = {it: f for it, f in freq.items() if f >= min_count}
    tree = _FPTree()
    for items, c in weighted:
        ordered = sorted((it for it in items if it in keep), key=lambda it: (-keep[it], it))
        if ordered:
            tree.add(ordered, c)
    return tree


def fp_growth(transactions: Iterable[Sequence[int]], min_count: int, max_len: int,
              accept=None) -> list[tuple[tuple[int, ...], int]]:
    """Frequent itemsets (as sorted item tuples) with their counts.

    ``accept(itemset)`` may veto an itemset; vetoed itemsets are not extended,
    so it must be anti-monotone (any superset of a vetoed set is vetoed too).
    """
    min_count = max(1, int(min_count))
    tree = _build_tree(((t, 1) for t in transactions), min_count)
    out = []

    def grow(tree: _FPTree, suffix: tuple[int, ...]):
        for item in sorted(tree.counts, key=lambda it: (tree.counts[it], -it)):
            count = tree.counts[item]
            if count < min_count:
                continue
            itemset = tuple(sorted(suffix + (item,)))
            if accept is not None and not accept(itemset):
                continue
            out.append((itemset, count))
            if len(itemset) < max_len:
                cond = _build_tree(tree.prefix_paths(item), min_count)
                if cond.counts:
                    grow(cond, suffix + (item,))

    grow(tree, ())
    return out


# ---------------------------------------------------------------------------
# Candidate pools


def _to_bitset(col: np.ndarray) -> int:
    return int.from_bytes(np.packbits(col.astype(bool), bitorder="little").tobytes(),
                          "little")


@dataclass(frozen=True)
class CandidatePool:
    positive: tuple[Rule, ...]
    negative: tuple[Rule, ...]
    min_support_pos: int = 0
    min_support_neg: int = 0

    def __len__(self):
        return len(self.positive) + len(self.negative)

    def restrict(self, data, pos_floor: int, neg_floor: int) -> "CandidatePool":
        """Keep only rules meeting the given support floors on ``data``."""
        pos = tuple(r for r in self.positive if support(r, data) >= pos_floor)
        neg = tuple(r for r in self.negative if support(r, data) >= neg_floor)
        return CandidatePool(pos, neg, max(pos_floor, self.min_support_pos),
                             max(neg_floor, self.min_support_neg))

    def capped(self, data, max_pool: int | None) -> "CandidatePool":
        """Keep at most ``max_pool`` rules per side, highest precision first."""
        if max_pool is None:
            return self
        return CandidatePool(_cap(self.positive, data, 1, max_pool),
                             _cap(self.negative, data, -1, max_pool),
                             self.min_support_pos, self.min_support_neg)


def _cap(rules: tuple[Rule, ...], data, cls: int, max_pool: int) -> tuple[Rule, ...]:
    if len(rules) <= max_pool:
        return rules
    prec = [precision(r, data, cls) for r in rules]
    keep = sorted(range(len(rules)), key=lambda i: (-prec[i], i))[:max_pool]
    return tuple(rules[i] for i in sorted(keep))


def mine_candidates(d: BinaryDataset, max_len: int = 4, alpha1: float = 0.0,
                    alpha2: float = 0.0, min_class_count: int = 1,
                    max_pool: int | None = 5000) -> CandidatePool:
    """Mine positive and negative candidate rules.

    Positive rules are frequent itemsets among positive-labeled rows, negative
    rules among negative-labeled rows (each must cover at least
    ``min_class_count`` rows of its class). Every rule also has to reach the
    minimum-support bound on the whole dataset. Pools are ordered
    lexicographically by condition index.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    pos_floor, neg_floor = min_support_bounds(d.n, alpha1, alpha2)
    masks = [_to_bitset(d.bits[:, j]) for j in range(d.bits.shape[1])]
    everything = (1 << d.n) - 1

    def full_support(itemset):
        m = everything
        for j in itemset:
            m &= masks[j]
        return m.bit_count()

    sides = []
    for cls, floor in ((1, pos_floor), (-1, neg_floor)):
        if floor > d.n:
            sides.append(())
            continue
        rows = d.bits[d.labels == cls]
        transactions = [np.flatnonzero(r).tolist() for r in rows]
        found = fp_growth(transactions, min_class_count, max_len,
                          accept=lambda s, f=floor: full_support(s) >= f)
        itemsets = sorted(s for s, _ in found)
        sides.append(tuple(Rule(tuple(d.conditions[j] for j in s)) for s in itemsets))
    pool = CandidatePool(sides[0], sides[1], pos_floor, neg_floor)
    return pool.capped(d, max_pool)


def format_pool(pool: CandidatePool, data) -> str:
    """Human-readable dump: one rule per line with support and precision."""
    lines = []
    for title, rules, cls in (("positive", pool.positive, 1), ("negative", pool.negative, -1)):
        lines.append(f"# {title} rules ({len(rules)})")
        for r in rules:
            lines.append(f"{r}\tsupport={support(r, data)}\t"
                         f"precision={precision(r, data, cls):.6f}")
    return "\n".join(lines) + "\n"
