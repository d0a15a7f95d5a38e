import math

import numpy as np
import pytest

from hybridpm.data import split
from hybridpm.frontier import (CSV_COLUMNS, DIAGNOSTIC_COLUMNS, LINEAR, RULES, FrontierPoint,
                               RuleSettings, SweepGrid, evaluate, export_frontier, pareto,
                               read_frontier, sweep)
from hybridpm.linear import apg_train
from hybridpm.oracle import simulate_process
from hybridpm.rules import Condition, Rule
from hybridpm.ruleset import HybridRuleSetModel, RuleSetPair, complexity
from hybridpm.verify import segment_dataset, two_blob_dataset

from conftest import same_point

FAST = RuleSettings(max_len=2, T=400, restarts=1)


def pt(t, a, c=0):
    return FrontierPoint(t, a, c, 0.0, 0.0, RULES)


class TestEvaluate:
    def test_empty_pair(self):
        d = segment_dataset(n=200)
        p = evaluate(RuleSetPair((), ()), d)
        assert p.transparency == 0.0
        assert p.accuracy == d.blackbox_accuracy()
        assert p.complexity == 0

    def test_tied_linear_model(self):
        d = two_blob_dataset()
        m = apg_train(d, 0.001, 2.0)
        assert m.theta_plus == m.theta_minus
        assert evaluate(m, d).transparency == 1.0

    def test_matches_simulation(self):
        d = segment_dataset(n=150)
        r = Rule((Condition("segment", "==", "core"),))
        n = Rule((Condition("segment", "==", "east"), Condition("u1", "<=", 0.5)))
        pair = RuleSetPair((r,), (n,))
        p = evaluate(HybridRuleSetModel(pair, 0.01, 0.1, 0.0), d)
        err, transp = simulate_process(pair, d)
        assert p.transparency == transp
        assert p.accuracy == pytest.approx(1 - err, abs=1e-15)
        assert p.complexity == complexity(pair) == 3

    def test_linear_matches_simulation(self):
        d = two_blob_dataset()
        m = apg_train(d, 0.01, 0.05)
        p = evaluate(m, d)
        err, transp = simulate_process(m, d)
        assert p.transparency == transp
        assert p.accuracy == pytest.approx(1 - err, abs=1e-15)
        assert p.complexity == int(np.count_nonzero(m.w))

    def test_pure(self):
        d = two_blob_dataset()
        m = apg_train(d, 0.01, 0.05)
        assert same_point(evaluate(m, d), evaluate(m, d))

    def test_schema_mismatch(self):
        d = two_blob_dataset()
        pair = RuleSetPair((Rule((Condition("nope", "==", "1"),)),), ())
        with pytest.raises(KeyError):
            evaluate(pair, d)


@pytest.fixture(scope="module")
def halves():
    return split(segment_dataset(n=300))


class TestSweep:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            SweepGrid((), (0.1,))
        with pytest.raises(ValueError):
            SweepGrid((-0.1,), (0.1,))

    def test_cardinality_and_order(self, halves):
        grid = SweepGrid((0.02, 0.005, 0.01), (0.3, 0.05), rules=FAST)
        pts = sweep(*halves, grid, RULES)
        assert len(pts) == 7
        assert pts[0].transparency == 0.0 and pts[0].complexity == 0
        assert pts[0].accuracy == halves[1].blackbox_accuracy()
        keys = [(p.alpha2, p.alpha1) for p in pts[1:]]
        assert keys == sorted(keys)

    def test_jobs_do_not_change_output(self, halves, tmp_path):
        grid = SweepGrid((0.005, 0.02), (0.05, 0.3), rules=FAST)
        a = sweep(*halves, grid, RULES, jobs=1)
        b = sweep(*halves, grid, RULES, jobs=4)
        export_frontier(a, tmp_path / "a.csv")
        export_frontier(b, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_huge_alpha1_gives_no_rules(self, halves):
        grid = SweepGrid((2.0, 5.0), (0.1, 0.5), rules=FAST)
        pts = sweep(*halves, grid, RULES)
        assert all(p.transparency == 0.0 for p in pts)

    def test_failed_cell_is_recorded(self, halves):
        grid = SweepGrid((0.01,), (0.1, 1.5), rules=FAST)
        pts = sweep(*halves, grid, RULES)
        assert len(pts) == 3
        assert not pts[1].failed
        assert pts[2].failed and pts[2].complexity == -1 and math.isnan(pts[2].accuracy)

    def test_linear_sweep(self, halves):
        tr, te = split(two_blob_dataset())
        pts = sweep(tr, te, SweepGrid((0.01,), (0.01, 2.0)), LINEAR)
        assert [p.kind for p in pts] == [LINEAR] * 3
        assert pts[-1].transparency == 1.0

    def test_models_saved(self, halves, tmp_path):
        from hybridpm.persist import load_model
        grid = SweepGrid((0.01,), (0.1,), rules=FAST)
        pts = sweep(*halves, grid, RULES, models_dir=tmp_path / "models")
        m = load_model(pts[1].model_path)
        assert evaluate(m, halves[1]).accuracy == pts[1].accuracy


class TestPareto:
    def test_dominated_point_dropped(self):
        out = pareto([pt(0, 0.86), pt(0.5, 0.85), pt(0.4, 0.84)])
        assert [(p.transparency, p.accuracy) for p in out] == [(0, 0.86), (0.5, 0.85)]

    def test_single_point(self):
        assert pareto([pt(0.3, 0.9, 2)]) == [pt(0.3, 0.9, 2)]

    def test_tie_keeps_lower_complexity(self):
        out = pareto([pt(0.5, 0.8, 9), pt(0.5, 0.8, 7)])
        assert [p.complexity for p in out] == [7]

    def test_failed_points_ignored(self):
        bad = FrontierPoint(math.nan, math.nan, -1, 0.1, 0.1, RULES, status="error: x")
        assert pareto([bad, pt(0.2, 0.7)]) == [pt(0.2, 0.7)]

    def test_dominance_free_random(self, rng):
        for _ in range(200):
            k = int(rng.integers(1, 25))
            pts = [pt(float(t), float(a), int(c))
                   for t, a, c in zip(rng.integers(0, 5, k) / 4, rng.integers(0, 5, k) / 4,
                                      rng.integers(0, 5, k))]
            out = pareto(pts)
            assert [p.transparency for p in out] == sorted(p.transparency for p in out)
            for p in out:
                for q in pts:
                    assert not (q.transparency >= p.transparency and q.accuracy >= p.accuracy
                                and (q.transparency > p.transparency
                                     or q.accuracy > p.accuracy))


class TestExport:
    def test_empty(self, tmp_path):
        export_frontier([], tmp_path / "f.csv")
        assert (tmp_path / "f.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_round_trip(self, tmp_path, rng):
        pts = [FrontierPoint(float(t), float(a), int(c), float(a1), float(a2), RULES, "m.json")
               for t, a, c, a1, a2 in rng.random((10, 5)) * [1, 1, 20, 0.06, 0.5]]
        export_frontier(pts, tmp_path / "f.csv")
        back = read_frontier(tmp_path / "f.csv")
        for p, q in zip(pts, back):
            for field in ("transparency", "accuracy", "alpha1", "alpha2"):
                assert abs(getattr(p, field) - getattr(q, field)) <= 1e-6
            assert (p.complexity, p.kind, p.model_path) == (q.complexity, q.kind, q.model_path)

    def test_six_decimals(self, tmp_path):
        export_frontier([pt(1 / 3, 2 / 3, 4)], tmp_path / "f.csv")
        row = (tmp_path / "f.csv").read_text().splitlines()[1]
        assert row.startswith("0.333333,0.666667,4,")

    def test_endpoint_row(self, tmp_path):
        tr, te = split(segment_dataset(n=200))
        pts = sweep(tr, te, SweepGrid((0.01,), (0.1,), rules=FAST), RULES)
        export_frontier(pts, tmp_path / "f.csv")
        first = read_frontier(tmp_path / "f.csv")[0]
        assert first.complexity == 0 and first.transparency == 0.0

    def test_diagnostic_columns(self, tmp_path):
        export_frontier([pt(0.5, 0.8)], tmp_path / "f.csv", diagnostics=True)
        header = (tmp_path / "f.csv").read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS + DIAGNOSTIC_COLUMNS)
        assert read_frontier(tmp_path / "f.csv")[0].status == "ok"
