import numpy as np
import pytest

from hybridpm.data import make_dataset
from hybridpm.linear import HINGE, HybridLinearModel, LossSpec, Problem, fit_encoding
from hybridpm.oracle import (OracleError, brute_force_ruleset, finite_diff,
                             grid_minimize_linear, make_tiny_instance, simulate_process)
from hybridpm.rules import CandidatePool, Rule, support
from hybridpm.ruleset import RuleSetPair, objective

from conftest import binary_data, rule


def bb_error(d):
    return float(np.mean(d.labels != d.blackbox_labels))


class TestBruteForce:
    def test_empty_pool(self):
        d = binary_data([[1], [0], [1], [0]], [1, -1, -1, 1], [1, 1, -1, -1])
        pair, lam = brute_force_ruleset(CandidatePool((), ()), d, 0.1, 0.2)
        assert pair.empty and lam == bb_error(d)

    def test_rule_covering_positives(self):
        X = [[1], [1], [0], [0], [0]]
        d = binary_data(X, [1, 1, -1, -1, -1], [-1, 1, -1, 1, -1])
        r = rule(("x0", 1))
        pool = CandidatePool((r,), ())
        for a1, a2 in [(0.1, 0.2), (0.5, 0.2), (0.05, 0.0)]:
            with_r = objective(RuleSetPair((r,), ()), d, a1, a2)
            without = objective(RuleSetPair((), ()), d, a1, a2)
            pair, lam = brute_force_ruleset(pool, d, a1, a2)
            assert lam == min(with_r, without)
            assert (r in pair.positive) == (with_r < without)

    def test_penalty_dominance(self):
        inst = make_tiny_instance(2)
        pair, _ = brute_force_ruleset(inst.universe, inst.data, 1.3, 0.25)
        assert pair.empty

    def test_space_limit(self):
        rules = tuple(Rule((c,)) for c in binary_data(np.eye(12, dtype=int), [1] * 12,
                                                      [1] * 12).conditions)
        d = binary_data(np.eye(12, dtype=int), [1] * 12, [1] * 12)
        with pytest.raises(OracleError):
            brute_force_ruleset(CandidatePool(rules, rules[:2]), d, 0.1, 0.1)

    def test_size_cap(self):
        inst = make_tiny_instance(8)
        pair, lam = brute_force_ruleset(inst.universe, inst.data, 0.001, 0.3,
                                        max_rules_per_side=1)
        assert len(pair.positive) <= 1 and len(pair.negative) <= 1
        _, free = brute_force_ruleset(inst.universe, inst.data, 0.001, 0.3)
        assert free <= lam

    def test_objective_matches_closed_form(self):
        inst = make_tiny_instance(12)
        pair, lam = brute_force_ruleset(inst.universe, inst.data, inst.alpha1, inst.alpha2)
        assert lam == pytest.approx(objective(pair, inst.data, inst.alpha1, inst.alpha2),
                                    abs=1e-12)


class TestSimulateProcess:
    def test_empty_model(self):
        d = binary_data([[1], [0], [1], [0]], [1, -1, -1, 1], [1, 1, -1, -1])
        assert simulate_process(RuleSetPair((), ()), d) == (bb_error(d), 0.0)

    def test_perfect_full_cover(self):
        d = binary_data([[1], [0], [1]], [1, -1, 1], [-1, 1, -1])
        pair = RuleSetPair((rule(("x0", 1)),), (rule(("x0", 0)),))
        assert simulate_process(pair, d) == (0.0, 1.0)

    def test_linear_model(self):
        d = make_dataset({"x": [-2.0, -0.1, 0.1, 2.0]}, [-1, 1, -1, 1], [1, 1, 1, 1])
        enc = fit_encoding(d)
        m = HybridLinearModel(np.array([1.0]), 0.5, -0.5, enc)
        err, transp = simulate_process(m, d)
        assert transp == 0.5
        assert err == 0.25


class TestFiniteDiff:
    def test_quadratic(self, rng):
        x = rng.normal(size=5)
        g = finite_diff(lambda v: 0.5 * float(v @ v), x, 1e-4)
        np.testing.assert_allclose(g, x, atol=1e-8)

    def test_constant(self):
        np.testing.assert_array_equal(finite_diff(lambda v: 3.0, np.ones(3)), np.zeros(3))

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_diff(lambda v: 0.0, [1.0], 0.0)


class TestGridMinimize:
    def test_separable_large_gap_penalty(self):
        x = np.array([-2.0, -1.5, -1.0, 1.0, 1.5, 2.0])
        y = np.array([-1, -1, -1, 1, 1, 1])
        prob = Problem(x[:, None], y, -y)
        spec = LossSpec(HINGE, 1e-4)
        _, (w, tp, tm) = grid_minimize_linear(prob, 0.0, 5.0, spec, resolution=80)
        assert tp == tm
        s = prob.X @ w
        pred = np.where(s >= tp, 1, -1)
        assert np.all(pred == y)

    def test_huge_l1_penalty(self):
        prob = Problem(np.array([[1.0], [-1.0], [0.5]]), np.array([1, -1, 1]),
                       np.array([1, -1, -1]))
        _, (w, _, _) = grid_minimize_linear(prob, 50.0, 0.1, LossSpec(HINGE, 0.1),
                                            resolution=40)
        assert np.all(w == 0)

    def test_refinement_never_increases(self):
        from hybridpm.verify import one_feature_problem
        prob = one_feature_problem()
        spec = LossSpec(HINGE, 1e-4)
        vals = [grid_minimize_linear(prob, 0.01, 0.05, spec, resolution=r)[0]
                for r in (20, 40, 80, 160)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_reported_point_attains_value(self):
        from hybridpm.linear import objective_F
        from hybridpm.verify import one_feature_problem
        prob = one_feature_problem()
        spec = LossSpec(HINGE, 1e-4)
        val, (w, tp, tm) = grid_minimize_linear(prob, 0.01, 0.05, spec, resolution=50)
        assert tp >= tm
        assert objective_F(w, tp, tm, prob, 0.01, 0.05, spec) == pytest.approx(val, abs=1e-12)

    def test_too_many_features(self):
        prob = Problem(np.zeros((2, 3)), np.array([1, -1]), np.array([1, -1]))
        with pytest.raises(OracleError):
            grid_minimize_linear(prob, 0.1, 0.1, LossSpec(HINGE, 0.1), resolution=4)


class TestTinyInstances:
    def test_bounded_pools(self):
        for seed in range(30):
            inst = make_tiny_instance(seed)
            assert inst.data.n <= 40
            assert len(inst.data.conditions) <= 12
            assert len(inst.universe) <= 12
            assert set(inst.pool.positive) <= set(inst.universe.positive)

    def test_pool_respects_floors(self):
        inst = make_tiny_instance(3)
        assert all(support(r, inst.data) >= inst.pool.min_support_pos
                   for r in inst.pool.positive)
        assert all(support(r, inst.data) >= inst.pool.min_support_neg
                   for r in inst.pool.negative)


class TestSupportPruningGap:
    def test_optimal_rule_can_sit_below_floor(self):
        # one positive row the black box gets wrong, isolated by x0 == 1
        X = np.zeros((10, 1), dtype=int)
        X[0, 0] = 1
        y = np.array([1] + [-1] * 9)
        yb = y.copy()
        yb[0] = -1
        d = binary_data(X, y, yb)
        r = rule(("x0", 1))
        a1, a2 = 0.12, 0.5
        pair, _ = brute_force_ruleset(CandidatePool((r,), ()), d, a1, a2)
        assert pair.positive == (r,)
        assert support(r, d) < d.n * a1
