"""Transparency/accuracy frontiers from hyperparameter sweeps."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DEFAULT_QUANTILES, Dataset, binarize
from .linear import ApgConfig, HybridLinearModel, LossSpec, apg_train, predict_linear_batch
from .rules import min_support_bounds, mine_candidates
from .ruleset import (DEFAULT_C0, DEFAULT_EPSILON, DEFAULT_ITERATIONS, DEFAULT_RESTARTS,
                      HybridRuleSetModel, RouteTag, complexity, predict_batch, train)

RULES = "rules"
LINEAR = "linear"

CSV_COLUMNS = ("transparency", "accuracy", "complexity", "alpha1", "alpha2", "kind",
               "model_path")
DIAGNOSTIC_COLUMNS = ("interpretable_accuracy", "blackbox_accuracy", "status")


@dataclass(frozen=True)
class FrontierPoint:
    transparency: float
    accuracy: float
    complexity: int
    alpha1: float
    alpha2: float
    kind: str
    model_path: str = ""
    interpretable_accuracy: float = float("nan")
    blackbox_accuracy: float = float("nan")
    status: str = "ok"

    @property
    def failed(self) -> bool:
        return self.status.startswith("error")


@dataclass(frozen=True)
class RuleSettings:
    max_len: int = 4
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    min_class_count: int = 1
    max_pool: int | None = 5000
    T: int = DEFAULT_ITERATIONS
    C0: float = DEFAULT_C0
    restarts: int = DEFAULT_RESTARTS
    epsilon: float = DEFAULT_EPSILON


@dataclass(frozen=True)
class LinearSettings:
    loss: LossSpec = LossSpec()
    apg: ApgConfig = ApgConfig()


@dataclass(frozen=True)
class SweepGrid:
    alpha1_values: tuple[float, ...]
    alpha2_values: tuple[float, ...]
    rules: RuleSettings = field(default_factory=RuleSettings)
    linear: LinearSettings = field(default_factory=LinearSettings)

    def __post_init__(self):
        a1 = tuple(float(a) for a in self.alpha1_values)
        a2 = tuple(float(a) for a in self.alpha2_values)
        if not a1 or not a2:
            raise ValueError("sweep grids must be nonempty")
        if min(a1) < 0 or min(a2) < 0:
            raise ValueError("alpha values must be non-negative")
        object.__setattr__(self, "alpha1_values", a1)
        object.__setattr__(self, "alpha2_values", a2)

    def cells(self) -> list[tuple[float, float]]:
        """(alpha1, alpha2) pairs ordered by alpha2, then alpha1."""
        return sorted({(a1, a2) for a1 in self.alpha1_values for a2 in self.alpha2_values},
                      key=lambda c: (c[1], c[0]))


def _route_accuracy(correct: np.ndarray, mask: np.ndarray) -> float:
    return float(np.mean(correct[mask])) if mask.any() else float("nan")


def evaluate(model, test: Dataset, model_path: str = "") -> FrontierPoint:
    """Transparency, end-to-end accuracy and complexity of a model on ``test``."""
    if isinstance(model, HybridLinearModel):
        labels, routes = predict_linear_batch(model, test, test.blackbox_labels)
        kind, cx = LINEAR, model.nonzero
    else:
        labels, routes = predict_batch(model, test, test.blackbox_labels)
        kind = RULES
        pair = model.pair if isinstance(model, HybridRuleSetModel) else model
        cx = complexity(pair)
    interp = routes != RouteTag.BLACKBOX
    correct = labels == test.labels
    return FrontierPoint(
        transparency=float(np.mean(interp)),
        accuracy=float(np.mean(correct)),
        complexity=int(cx),
        alpha1=float(getattr(model, "alpha1", float("nan"))),
        alpha2=float(getattr(model, "alpha2", float("nan"))),
        kind=kind,
        model_path=model_path,
        interpretable_accuracy=_route_accuracy(correct, interp),
        blackbox_accuracy=_route_accuracy(correct, ~interp),
    )


def endpoint(test: Dataset, kind: str) -> FrontierPoint:
    """The pure black-box point: transparency 0, no cognitive units."""
    acc = test.blackbox_accuracy()
    return FrontierPoint(0.0, acc, 0, float("nan"), float("nan"), kind,
                         blackbox_accuracy=acc, status="endpoint")


def _cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _model_filename(kind: str, a1: float, a2: float) -> str:
    return f"{kind}_a1_{a1:.6g}_a2_{a2:.6g}.json"


def _run_cell(task) -> FrontierPoint:
    kind, train_d, test_d, binary, base_pool, a1, a2, grid, seed, models_dir = task
    try:
        if kind == RULES:
            s = grid.rules
            pos, neg = min_support_bounds(binary.n, a1, a2)
            pool = base_pool.restrict(binary, pos, neg).capped(binary, s.max_pool)
            model = train(binary, pool, a1, a2, T=s.T, C0=s.C0, seed=seed,
                          restarts=s.restarts, epsilon=s.epsilon)
            model = replace(model, features=tuple(zip(train_d.feature_names, train_d.kinds)))
        else:
            model = apg_train(train_d, a1, a2, grid.linear.loss, grid.linear.apg, seed=seed)
        path = ""
        if models_dir is not None:
            from .persist import save_model
            path = str(Path(models_dir) / _model_filename(kind, a1, a2))
            save_model(model, path)
        return evaluate(model, test_d, model_path=path)
    except Exception as exc:  # one diverging cell must not end the sweep
        return FrontierPoint(float("nan"), float("nan"), -1, a1, a2, kind,
                             status=f"error: {type(exc).__name__}: {exc}")


def sweep(train_d: Dataset, test_d: Dataset, grid: SweepGrid, kind: str = RULES,
          seed: int = 42, jobs: int = 1, models_dir=None) -> list[FrontierPoint]:
    """Train and evaluate one model per grid cell.

    The output starts with the black-box endpoint followed by one point per
    (alpha1, alpha2) cell ordered by (alpha2, alpha1); it does not depend on
    ``jobs``.
    """
    if kind not in (RULES, LINEAR):
        raise ValueError(f"unknown model kind {kind!r}")
    cells = grid.cells()
    binary = base_pool = None
    if kind == RULES:
        binary = binarize(train_d, grid.rules.quantiles)
        a1_min = min(grid.alpha1_values)
        a2_min = min(grid.alpha2_values)
        # one mining pass at the loosest bounds; cells tighten it themselves
        base_pool = mine_candidates(binary, grid.rules.max_len,
                                    a1_min, a2_min if a2_min < 1 else 0.0,
                                    grid.rules.min_class_count, max_pool=None)
    if models_dir is not None:
        Path(models_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(kind, train_d, test_d, binary, base_pool, a1, a2, grid, _cell_seed(seed, i),
              models_dir) for i, (a1, a2) in enumerate(cells)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            points = list(ex.map(_run_cell, tasks))
    else:
        points = [_run_cell(t) for t in tasks]
    return [endpoint(test_d, kind), *points]


def pareto(points: Sequence[FrontierPoint]) -> list[FrontierPoint]:
    """Points not dominated in (transparency, accuracy), by transparency.

    Among points with identical metrics only the lowest complexity survives.
    """
    pts = [p for p in points
           if not p.failed and math.isfinite(p.transparency) and math.isfinite(p.accuracy)]
    keep = []
    for i, p in enumerate(pts):
        dominated = False
        for j, q in enumerate(pts):
            if i == j:
                continue
            if (q.transparency >= p.transparency and q.accuracy >= p.accuracy
                    and (q.transparency > p.transparency or q.accuracy > p.accuracy)):
                dominated = True
                break
            if q.transparency == p.transparency and q.accuracy == p.accuracy:
                if q.complexity < p.complexity or (q.complexity == p.complexity and j < i):
                    dominated = True
                    break
        if not dominated:
            keep.append(p)
    return sorted(keep, key=lambda p: (p.transparency, p.accuracy))


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def export_frontier(points: Sequence[FrontierPoint], path, diagnostics: bool = False) -> None:
    """Write the frontier CSV (6-decimal fixed point)."""
    header = CSV_COLUMNS + (DIAGNOSTIC_COLUMNS if diagnostics else ())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in points:
            row = [_fmt(p.transparency), _fmt(p.accuracy), str(p.complexity), _fmt(p.alpha1),
                   _fmt(p.alpha2), p.kind, p.model_path]
            if diagnostics:
                row += [_fmt(p.interpretable_accuracy), _fmt(p.blackbox_accuracy), p.status]
            w.writerow(row)


def read_frontier(path) -> list[FrontierPoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        extra = {}
        if "status" in r:
            extra = {"interpretable_accuracy": float(r["interpretable_accuracy"]),
                     "blackbox_accuracy": float(r["blackbox_accuracy"]),
                     "status": r["status"]}
        out.append(FrontierPoint(float(r["transparency"]), float(r["accuracy"]),
                                 int(r["complexity"]), float(r["alpha1"]), float(r["alpha2"]),
                                 r["kind"], r["model_path"], **extra))
    return out
