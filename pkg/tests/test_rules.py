import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridpm.data import make_dataset
from hybridpm.rules import (CandidatePool, Condition, Rule, SchemaError, covers_rule, covers_set,
                            format_pool, fp_growth, min_support_bounds, mine_candidates,
                            precision, rule_coverage, support)

from conftest import binary_data, rule


class TestCondition:
    def test_unknown_operator(self):
        with pytest.raises(ValueError):
            Condition("a", "<", 1)

    def test_threshold_inclusive(self):
        assert Condition("age", "<=", 41).holds(41)
        assert not Condition("age", ">", 41).holds(41)

    def test_numeric_condition_on_text(self):
        with pytest.raises(SchemaError):
            Condition("age", "<=", 41).holds("old")

    def test_dict_round_trip(self):
        c = Condition("age", ">", 41.5)
        assert Condition.from_dict(c.to_dict()) == c


class TestRule:
    def test_needs_conditions(self):
        with pytest.raises(ValueError):
            Rule(())

    def test_distinct_conditions(self):
        c = Condition("a", "==", "1")
        with pytest.raises(ValueError):
            Rule((c, c))

    def test_length(self):
        assert rule(("a", 1), ("b", 0), ("c", 1)).length == 3


class TestCoverage:
    def test_all_conditions_hold(self):
        r = rule(("a", 1), ("b", 0))
        assert covers_rule(r, {"a": "1", "b": "0"})

    def test_one_condition_fails(self):
        r = rule(("a", 1), ("b", 0))
        assert not covers_rule(r, {"a": "1", "b": "1"})

    def test_numeric_boundary(self):
        r = Rule((Condition("age", "<=", 41),))
        assert covers_rule(r, {"age": 41})

    def test_unknown_feature(self):
        with pytest.raises(SchemaError):
            covers_rule(rule(("z", 1)), {"a": "1"})

    def test_empty_set_covers_nothing(self):
        assert not covers_set([], {"a": "1"})

    def test_disjunction(self):
        r1, r2 = rule(("a", 0)), rule(("b", 1))
        assert covers_set([r1, r2], {"a": "1", "b": "1"})
        assert covers_set([r2], {"a": "1", "b": "1"})


def _fixture10():
    # x0 on rows 0-2, x1 on rows 2-3
    X = np.zeros((10, 2), dtype=int)
    X[:3, 0] = 1
    X[2:4, 1] = 1
    y = np.array([1, 1, 1, -1, -1, -1, -1, -1, -1, -1])
    return binary_data(X, y, y)


class TestSupportPrecision:
    def test_empty(self):
        assert support((), _fixture10()) == 0

    def test_single_rule(self):
        d = _fixture10()
        r = rule(("x0", 1))
        assert support(r, d) == sum(covers_rule(r, {"x0": str(v)}) for v in [1] * 3 + [0] * 7)
        assert support(r, d) == 3

    def test_union(self):
        d = _fixture10()
        r1, r2 = rule(("x0", 1)), rule(("x1", 1))
        assert (support(r1, d), support(r2, d)) == (3, 2)
        assert support((r1, r2), d) == 4

    def test_precision_ratio(self):
        y = np.array([1] * 7 + [-1] * 3 + [-1] * 5)
        X = np.array([[1]] * 10 + [[0]] * 5)
        d = binary_data(X, y, y)
        assert precision(rule(("x0", 1)), d, 1) == 0.7

    def test_precision_of_uncovered(self):
        d = _fixture10()
        assert precision(rule(("x0", 1), ("x0", 0)), d, 1) == 0.0

    def test_precision_pure(self):
        assert precision(rule(("x0", 1)), _fixture10(), 1) == 1.0

    def test_coverage_on_raw_table(self):
        d = make_dataset({"age": [30.0, 41.0, 50.0]}, [1, 1, -1], [1, 1, 1])
        r = Rule((Condition("age", "<=", 41),))
        assert rule_coverage(r, d).tolist() == [True, True, False]


class TestMinSupportBounds:
    def test_stated_values(self):
        assert min_support_bounds(1000, 0.005, 0.5) == (5, 10)
        assert min_support_bounds(100, 0.0, 0.3) == (0, 0)
        assert min_support_bounds(100, 0.033, 0.1) == (4, 4)

    def test_alpha2_must_be_below_one(self):
        with pytest.raises(ValueError):
            min_support_bounds(10, 0.1, 1.0)

    @given(st.integers(1, 5000), st.floats(0, 0.5), st.floats(0, 0.95))
    def test_ceiling_of_real_bounds(self, n, a1, a2):
        pos, neg = min_support_bounds(n, a1, a2)
        assert neg >= pos
        assert pos >= n * a1 - 1e-6 and pos - 1 < n * a1
        assert neg >= n * a1 / (1 - a2) - 1e-6


class TestFpGrowth:
    def test_matches_enumeration(self, rng):
        items = 6
        tx = [sorted(rng.choice(items, size=rng.integers(1, items), replace=False).tolist())
              for _ in range(25)]
        found = {s: c for s, c in fp_growth(tx, 3, 3)}
        expected = {}
        for k in range(1, 4):
            for s in itertools.combinations(range(items), k):
                c = sum(set(s) <= set(t) for t in tx)
                if c >= 3:
                    expected[s] = c
        assert found == expected


def _exhaustive_pool(d, max_len, a1, a2, min_class_count=1):
    pos_floor, neg_floor = min_support_bounds(d.n, a1, a2)
    out = {1: set(), -1: set()}
    for k in range(1, max_len + 1):
        for s in itertools.combinations(range(len(d.conditions)), k):
            cov = np.all(d.bits[:, list(s)], axis=1)
            for cls, floor in ((1, pos_floor), (-1, neg_floor)):
                if cov.sum() >= floor and np.sum(cov & (d.labels == cls)) >= min_class_count:
                    out[cls].add(s)
    return out


class TestMineCandidates:
    def test_length_cap(self):
        d = binary_data([[1], [0], [1]], [1, -1, 1], [1, 1, 1])
        pool = mine_candidates(d, max_len=1)
        singles = {Rule((c,)) for c in d.conditions}
        assert set(pool.positive) <= singles and set(pool.negative) <= singles

    def test_huge_alpha1_empties_pools(self):
        d = binary_data([[1], [0], [1]], [1, -1, 1], [1, 1, 1])
        pool = mine_candidates(d, alpha1=2.0)
        assert pool.positive == () and pool.negative == ()

    def test_planted_rule_present(self, rng):
        n = 100
        X = rng.random((n, 5)) < 0.5
        X[:40, 0] = X[:40, 1] = True
        X[40:, 0] = False
        y = np.where(X[:, 0] & X[:, 1], 1, -1)
        d = binary_data(X, y, y)
        assert min_support_bounds(n, 0.05, 0.5) == (5, 10)
        pool = mine_candidates(d, max_len=4, alpha1=0.05, alpha2=0.5)
        planted = rule(("x0", 1), ("x1", 1))
        assert support(planted, d) == 40
        assert planted in pool.positive

    def test_support_floors(self, rng):
        X = rng.random((60, 4)) < 0.5
        y = rng.choice([-1, 1], 60)
        d = binary_data(X, y, y)
        pool = mine_candidates(d, max_len=3, alpha1=0.05, alpha2=0.4)
        assert all(support(r, d) >= pool.min_support_pos for r in pool.positive)
        assert all(support(r, d) >= pool.min_support_neg for r in pool.negative)

    def test_deterministic_order(self, rng):
        X = rng.random((50, 4)) < 0.5
        y = rng.choice([-1, 1], 50)
        d = binary_data(X, y, y)
        pool = mine_candidates(d, max_len=3)
        idx = [tuple(d.condition_index(c) for c in r.conditions) for r in pool.positive]
        assert idx == sorted(idx)
        assert pool == mine_candidates(d, max_len=3)

    def test_cap_keeps_best_precision(self, rng):
        X = rng.random((50, 4)) < 0.5
        y = np.where(X[:, 0], 1, rng.choice([-1, 1], 50))
        d = binary_data(X, y, y)
        full = mine_candidates(d, max_len=2, max_pool=None)
        capped = mine_candidates(d, max_len=2, max_pool=5)
        assert len(capped.positive) == 5
        worst_kept = min(precision(r, d, 1) for r in capped.positive)
        dropped = set(full.positive) - set(capped.positive)
        assert all(precision(r, d, 1) <= worst_kept for r in dropped)

    def test_matches_exhaustive_enumeration(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n, k = int(rng.integers(8, 25)), int(rng.integers(2, 4))
            X = rng.random((n, k)) < 0.5
            y = rng.choice([-1, 1], n)
            d = binary_data(X, y, y)
            a1, a2 = float(rng.uniform(0, 0.2)), float(rng.uniform(0, 0.5))
            max_len = int(rng.integers(1, 4))
            pool = mine_candidates(d, max_len, a1, a2, max_pool=None)
            expected = _exhaustive_pool(d, max_len, a1, a2)
            for cls, rules in ((1, pool.positive), (-1, pool.negative)):
                got = {tuple(d.condition_index(c) for c in r.conditions) for r in rules}
                assert got == expected[cls], seed

    def test_format_pool(self):
        d = _fixture10()
        pool = CandidatePool((rule(("x0", 1)),), ())
        text = format_pool(pool, d)
        assert "x0==1\tsupport=3\tprecision=1.000000" in text


class TestMonotonicity:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_union_and_conjunction(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.random((20, 3)) < 0.5
        y = rng.choice([-1, 1], 20)
        d = binary_data(X, y, y)
        conds = list(d.conditions)
        picks = rng.choice(len(conds), size=3, replace=False)
        r1 = Rule((conds[picks[0]],))
        r2 = Rule((conds[picks[0]], conds[picks[1]]))
        r3 = Rule((conds[picks[2]],))
        assert support(r2, d) <= support(r1, d)
        assert support((r1, r3), d) >= support((r1,), d)
