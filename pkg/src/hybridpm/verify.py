"""Self-checks that compare the fast implementations against the oracles.

Each ``check_*`` function returns a :class:`CheckResult`; :func:`run_checks`
runs any subset and is what ``hybridpm verify`` calls.
"""

from __future__ import annotations

import functools
import io
import tempfile
import time
from contextlib import redirect_stderr, redirect_stdout
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, make_dataset, split, write_dataset
from .frontier import (LINEAR, RULES, FrontierPoint, RuleSettings, SweepGrid, evaluate, pareto,
                       sweep)
from .linear import (HINGE, LOSS_KINDS, SMOOTHED_HINGE, ApgConfig, LossSpec, Problem,
                     apg_solve, apg_train, loss_gradient, loss_phi, smoothed_loss, smoothed_phi)
from .oracle import (brute_force_ruleset, finite_diff, grid_minimize_linear, make_tiny_instance,
                     simulate_process)
from .rules import support
from .ruleset import RuleSetPair, complexity, misclassification_error, train


@dataclass(frozen=True)
class CheckResult:
    key: str
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.key} {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _timed(key: str, title: str, limit: float | None):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs) -> CheckResult:
            t0 = time.perf_counter()
            ok, detail = fn(*args, **kwargs)
            dt = time.perf_counter() - t0
            if limit is not None and dt >= limit:
                ok, detail = False, f"{detail}; exceeded {limit:.0f}s limit"
            return CheckResult(key, title, bool(ok), detail, dt)
        return run
    return wrap


# ---------------------------------------------------------------------------
# Rule-set checks


def _random_pair(universe, rng) -> RuleSetPair:
    pos = tuple(r for r in universe.positive if rng.random() < 0.4)
    neg = tuple(r for r in universe.negative if rng.random() < 0.4)
    return RuleSetPair(pos, neg)


@_timed("c1", "closed-form error equals row-by-row simulation", 5.0)
def check_error_formula(n_datasets: int = 100, seed0: int = 1000):
    rng = np.random.default_rng(seed0)
    mismatches = 0
    for k in range(n_datasets):
        inst = make_tiny_instance(seed0 + k)
        pair = _random_pair(inst.universe, rng)
        closed = misclassification_error(pair, inst.data)
        sim, _ = simulate_process(pair, inst.data)
        mismatches += closed != sim
    return mismatches == 0, f"{mismatches}/{n_datasets} mismatches"


@dataclass(frozen=True)
class TinyRun:
    instance: object
    search_objective: float
    oracle_objective: float
    oracle_pair: RuleSetPair
    universe_pair: RuleSetPair
    traces: tuple


@functools.lru_cache(maxsize=4)
def tiny_runs(n_instances: int = 20, seed0: int = 0, T: int = 20000,
              restarts: int = 3) -> tuple[TinyRun, ...]:
    """Search and brute force on the same random instances (shared by c2-c4)."""
    out = []
    for k in range(n_instances):
        inst = make_tiny_instance(seed0 + k)
        model = train(inst.data, inst.pool, inst.alpha1, inst.alpha2, T=T,
                      restarts=restarts, seed=seed0 + k, record=True)
        pair, lam = brute_force_ruleset(inst.pool, inst.data, inst.alpha1, inst.alpha2)
        upair, _ = brute_force_ruleset(inst.universe, inst.data, inst.alpha1, inst.alpha2)
        out.append(TinyRun(inst, model.training_objective, lam, pair, upair,
                           tuple(tuple(t) for t in model.info["traces"])))
    return tuple(out)


@_timed("c2", "annealing search reaches the brute-force optimum", 60.0)
def check_search_optimality(n_instances: int = 20, tol: float = 1e-9, need: int = 18):
    runs = tiny_runs(n_instances)
    hits = sum(abs(r.search_objective - r.oracle_objective) <= tol for r in runs)
    below = sum(r.search_objective < r.oracle_objective - tol for r in runs)
    ok = hits >= need and below == 0
    return ok, f"{hits}/{len(runs)} at optimum (need {need}), {below} below the optimum"


@_timed("c3", "optimal rules respect the minimum-support bound", None)
def check_support_bound(n_instances: int = 20):
    violations = 0
    for r in tiny_runs(n_instances):
        d, a1, a2 = r.instance.data, r.instance.alpha1, r.instance.alpha2
        n = d.n
        violations += sum(support(rule, d) < n * a1 for rule in r.universe_pair.positive)
        violations += sum(support(rule, d) < n * a1 / (1 - a2)
                          for rule in r.universe_pair.negative)
    return violations == 0, f"{violations} violating rules"


@_timed("c4", "optimum respects the size and coverage bounds at every step", None)
def check_search_bounds(n_instances: int = 20, slack: float = 1e-12):
    violations = checked = 0
    for r in tiny_runs(n_instances):
        d, a1, a2 = r.instance.data, r.instance.alpha1, r.instance.alpha2
        pair = r.oracle_pair
        omega = complexity(pair)
        cov = support(pair.positive + pair.negative, d)
        for trace in r.traces:
            for lam in set(trace):
                checked += 1
                if omega > (lam + a2) / a1 + slack:
                    violations += 1
                if not pair.empty and cov < d.n * (a1 - lam) / a2 - slack:
                    violations += 1
    return violations == 0, f"{violations} violations over {checked} logged values"


# ---------------------------------------------------------------------------
# Linear-model checks


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def _near_kink(z: np.ndarray, kind: str, mu: float, gap: float) -> bool:
    if kind == HINGE:
        return bool(np.any(np.abs(z - 1) < gap) or np.any(np.abs(z - (1 - mu)) < gap))
    if kind == SMOOTHED_HINGE:
        return bool(np.any(np.abs(z - 1) < gap))
    return False


@_timed("c5", "smoothed-loss gradients match finite differences", 5.0)
def check_gradients(n_points: int = 100, h: float = 1e-6, tol: float = 1e-4, seed: int = 5):
    rng = np.random.default_rng(seed)
    worst, tested = 0.0, 0
    for kind in LOSS_KINDS:
        for mu in (1e-4, 0.2):
            spec = LossSpec(kind, mu)
            done = 0
            while done < n_points:
                n, p = int(rng.integers(1, 8)), int(rng.integers(1, 4))
                prob = Problem(rng.normal(size=(n, p)), rng.choice([-1, 1], n),
                               rng.choice([-1, 1], n))
                w = rng.normal(size=p)
                tp, tm = sorted(rng.normal(size=2), reverse=True)
                z = prob.margins(w, tp, tm)
                # the stencil moves each margin by at most h * (|x|_1 + 1)
                reach = h * (np.abs(prob.X).sum(axis=1) + 1.0)
                if _near_kink(z, kind, mu, 10 * reach.max()):
                    continue
                point = np.concatenate([w, [tp, tm]])

                def fn(v):
                    return smoothed_loss(v[:p], v[p], v[p + 1], prob, spec)

                gw, gp, gm = loss_gradient(w, tp, tm, prob, spec)
                err = _rel_err(np.concatenate([gw, [gp, gm]]), finite_diff(fn, point, h))
                worst = max(worst, err)
                done += 1
                tested += 1
    return worst <= tol, f"max relative error {worst:.2e} over {tested} points (limit {tol:g})"


@_timed("c6", "smoothed hinge is sandwiched by the hinge", None)
def check_sandwich(n_points: int = 1000, seed: int = 6, slack: float = 1e-12):
    rng = np.random.default_rng(seed)
    z = rng.uniform(-3, 3, n_points)
    bad = 0
    for mu in (1e-4, 1e-2, 0.2):
        lo = smoothed_phi(HINGE, z, mu)
        mid = loss_phi(HINGE, z)
        bad += int(np.sum(lo > mid + slack) + np.sum(mid > lo + mu / 2 + slack))
    return bad == 0, f"{bad} violations over {3 * n_points} evaluations"


def one_feature_problem(n: int = 40, seed: int = 7) -> Problem:
    """Noisy 1-d problem with an imperfect black box, already standardized."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = np.where(x + 0.7 * rng.normal(size=n) > 0, 1, -1)
    yb = np.where(rng.random(n) < 0.2, -y, y)
    x = (x - x.mean()) / x.std()
    return Problem(x[:, None], y, yb)


def two_blob_dataset(n: int = 200, p: int = 5, seed: int = 8) -> Dataset:
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) < n // 2, 1, -1)
    X = rng.normal(size=(n, p)) + 1.2 * y[:, None]
    yb = np.where(rng.random(n) < 0.1, -y, y)
    return make_dataset({f"x{j}": X[:, j] for j in range(p)}, y, yb)


@_timed("c7", "accelerated proximal gradient converges", 30.0)
def check_apg(tol: float = 1e-3, resolution: int = 800):
    prob = one_feature_problem()
    a1, a2 = 0.01, 0.05
    spec = LossSpec(HINGE, 1e-4)
    out = apg_solve(prob, a1, a2, spec, ApgConfig())
    grid_val, _ = grid_minimize_linear(prob, a1, a2, spec, resolution=resolution)
    gap = out["objective"] - grid_val
    blobs = two_blob_dataset()
    m = apg_train(blobs, 0.001, 2.0)
    pt = evaluate(m, blobs)
    ok = gap <= tol and pt.transparency == 1.0 and pt.accuracy >= 0.95
    return ok, (f"F - grid = {gap:.2e} (limit {tol:g}); large alpha2: transparency "
                f"{pt.transparency:.3f}, accuracy {pt.accuracy:.3f}")


# ---------------------------------------------------------------------------
# Frontier checks


def _dominance_free(points) -> bool:
    for p in points:
        for q in points:
            if (q.transparency >= p.transparency and q.accuracy >= p.accuracy
                    and (q.transparency > p.transparency or q.accuracy > p.accuracy)):
                return False
    return True


@_timed("c8", "frontier endpoints and pareto extraction", None)
def check_frontier_anchors(n_sets: int = 1000, seed: int = 9):
    d = two_blob_dataset(n=200)
    tr, te = split(d)
    grid = SweepGrid((0.001,), (0.01, 2.0))
    pts = sweep(tr, te, grid, kind=LINEAR, seed=42)
    end_ok = pts[0].transparency == 0.0 and pts[0].accuracy == te.blackbox_accuracy()
    m = apg_train(tr, 0.001, 2.0)
    tied = m.theta_plus == m.theta_minus
    standalone = float(np.mean(np.where(m.scores(te) >= m.theta_plus, 1, -1) == te.labels))
    full = evaluate(m, te)
    ones_ok = (tied and full.transparency == 1.0 and pts[-1].transparency == 1.0
               and full.accuracy == standalone)
    rng = np.random.default_rng(seed)
    bad_sets = 0
    for _ in range(n_sets):
        k = int(rng.integers(1, 30))
        cand = [FrontierPoint(float(t), float(a), int(c), 0.0, 0.0, RULES)
                for t, a, c in zip(rng.integers(0, 6, k) / 5, rng.integers(0, 6, k) / 5,
                                   rng.integers(0, 10, k))]
        bad_sets += not _dominance_free(pareto(cand))
    ok = end_ok and ones_ok and bad_sets == 0
    return ok, (f"endpoint accuracy {pts[0].accuracy:.6f} vs black box "
                f"{te.blackbox_accuracy():.6f}; tied thresholds {tied}, transparency "
                f"{full.transparency:.3f} (standalone accuracy {standalone:.3f}, hybrid "
                f"{full.accuracy:.3f}); {bad_sets}/{n_sets} pareto sets with dominance")


def segment_dataset(n: int = 1200, core: float = 0.8, flip: float = 0.05,
                    seed: int = 10) -> Dataset:
    """A ``core`` fraction of rows is always positive and flagged by one category.

    The remaining rows carry labels the features cannot explain; the simulated
    black box returns the true label flipped with probability ``flip``.
    """
    rng = np.random.default_rng(seed)
    in_core = rng.random(n) < core
    segment = np.where(in_core, "core", rng.choice(["east", "west"], n))
    y = np.where(in_core, 1, rng.choice([-1, 1], n))
    yb = np.where(rng.random(n) < flip, -y, y)
    return make_dataset({"segment": segment, "u1": rng.random(n), "u2": rng.normal(size=n)},
                        y, yb)


@_timed("c9", "flat frontier on the segment dataset", 120.0)
def check_frontier_shape(margin: float = 0.01, up_to: float = 0.8, jobs: int = 1):
    d = segment_dataset()
    tr, te = split(d)
    grid = SweepGrid((0.001, 0.005, 0.02, 0.06), (0.001, 0.01, 0.05, 0.1, 0.3, 0.5),
                     rules=RuleSettings(max_len=2))
    pts = sweep(tr, te, grid, kind=RULES, seed=42, jobs=jobs)
    bb = te.blackbox_accuracy()
    failed = [p for p in pts if p.failed]
    low = [p for p in pts if not p.failed and p.transparency <= up_to + 1e-12]
    worst = min(p.accuracy for p in low)
    reach = max(p.transparency for p in low)
    ok = not failed and worst >= bb - margin
    return ok, (f"black box {bb:.4f}, worst accuracy {worst:.4f} over {len(low)} points up to "
                f"transparency {reach:.3f}; {len(failed)} failed cells")


@_timed("c10", "training and sweeps are deterministic", None)
def check_determinism():
    from .cli import run
    d = segment_dataset(n=300, seed=11)
    problems = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        data = tmp / "train.csv"
        write_dataset(d, data)
        runs = {
            "train-rules": ["train-rules", "--data", str(data), "--alpha1", "0.01",
                            "--alpha2", "0.1", "--iterations", "2000"],
            "train-linear": ["train-linear", "--data", str(data), "--alpha1", "0.02",
                             "--alpha2", "0.1"],
        }
        for name, argv in runs.items():
            blobs = []
            for k in range(2):
                out = tmp / f"{name}-{k}.json"
                with redirect_stderr(io.StringIO()), redirect_stdout(io.StringIO()):
                    code = run([*argv, "--out", str(out)])
                blobs.append(out.read_bytes() if code == 0 else None)
            if blobs[0] is None or blobs[0] != blobs[1]:
                problems.append(name)
        csvs = []
        for jobs in (1, 2):
            out = tmp / f"frontier-{jobs}.csv"
            with redirect_stderr(io.StringIO()), redirect_stdout(io.StringIO()):
                code = run(["frontier", "--data", str(data), "--kind", "rules",
                            "--alpha1", "0.005,0.02", "--alpha2", "0.01,0.3",
                            "--iterations", "1000", "--jobs", str(jobs), "--out", str(out)])
            csvs.append(out.read_bytes() if code == 0 else None)
        if csvs[0] is None or csvs[0] != csvs[1]:
            problems.append("frontier --jobs")
    return not problems, ("byte-identical outputs" if not problems
                          else "differences in " + ", ".join(problems))


CHECKS = {
    "c1": check_error_formula,
    "c2": check_search_optimality,
    "c3": check_support_bound,
    "c4": check_search_bounds,
    "c5": check_gradients,
    "c6": check_sandwich,
    "c7": check_apg,
    "c8": check_frontier_anchors,
    "c9": check_frontier_shape,
    "c10": check_determinism,
}


def run_checks(keys=None) -> list[CheckResult]:
    keys = list(CHECKS) if not keys else list(keys)
    unknown = [k for k in keys if k not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    return [CHECKS[k]() for k in keys]
