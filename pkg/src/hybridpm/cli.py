"""Command-line interface: ``hybridpm <command> [flags]``.

Exit codes: 0 success, 1 invalid input or arguments, 2 failure while running.
Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .data import DEFAULT_QUANTILES, DataError, SplitSpec, binarize, load_dataset, load_table, split
from .frontier import (LINEAR, RULES, LinearSettings, RuleSettings, SweepGrid, evaluate,
                       export_frontier, pareto, sweep)
from .linear import (LOSS_KINDS, ApgConfig, HybridLinearModel, LossSpec, apg_train,
                     predict_linear_batch)
from .persist import ModelFormatError, load_model, save_model
from .rules import SchemaError, format_pool, mine_candidates
from .ruleset import (DEFAULT_C0, DEFAULT_EPSILON, DEFAULT_ITERATIONS, DEFAULT_RESTARTS,
                      RouteTag, check_schema, predict_batch, train)

DEFAULT_SEED = 42


class UsageError(Exception):
    """Bad command-line arguments (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _nonneg(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _add_data(p, label=True):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    if label:
        p.add_argument("--label", default="label", help="true-label column (default: label)")
    p.add_argument("--blackbox", default="blackbox",
                   help="black-box prediction column (default: blackbox)")


def _add_alphas(p, many=False):
    conv = _floats if many else _nonneg
    p.add_argument("--alpha1", type=conv, required=True, help="complexity penalty")
    p.add_argument("--alpha2", type=conv, required=True, help="transparency reward")


def _add_rule_knobs(p):
    p.add_argument("--max-len", type=_positive_int, default=4, help="max conditions per rule")
    p.add_argument("--quantiles", type=_floats, default=DEFAULT_QUANTILES,
                   help="numeric thresholds as quantiles (default: 0.25,0.5,0.75)")
    p.add_argument("--min-class-count", type=_positive_int, default=1,
                   help="minimum rows of the rule's class a candidate must cover")
    p.add_argument("--max-pool", type=_positive_int, default=5000,
                   help="max candidate rules per side")


def _add_search_knobs(p):
    p.add_argument("--iterations", type=_positive_int, default=DEFAULT_ITERATIONS)
    p.add_argument("--c0", type=float, default=DEFAULT_C0, help="temperature constant")
    p.add_argument("--restarts", type=_positive_int, default=DEFAULT_RESTARTS)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                   help="exploration probability")


def _add_linear_knobs(p):
    p.add_argument("--loss", choices=LOSS_KINDS, default="hinge")
    p.add_argument("--mu", type=_nonneg, default=1e-4, help="smoothing parameter")
    p.add_argument("--iterations", type=_positive_int, default=5000)
    p.add_argument("--tol", type=_nonneg, default=1e-4, help="relative stopping tolerance")
    p.add_argument("--eta0", type=float, default=1.0, help="initial step size")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybridpm", description="Hybrid interpretable/black-box models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mine", help="mine candidate rules and dump the pool")
    _add_data(p)
    p.add_argument("--alpha1", type=_nonneg, default=0.0)
    p.add_argument("--alpha2", type=_nonneg, default=0.0)
    _add_rule_knobs(p)
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("train-rules", help="train a hybrid rule-set model")
    _add_data(p)
    _add_alphas(p)
    _add_rule_knobs(p)
    _add_search_knobs(p)
    _add_seed(p)
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("train-linear", help="train a hybrid linear model")
    _add_data(p)
    _add_alphas(p)
    _add_linear_knobs(p)
    _add_seed(p)
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("predict", help="route and label each row of a CSV")
    p.add_argument("--model", required=True)
    _add_data(p, label=False)
    p.add_argument("--ignore", type=lambda s: tuple(s.split(",")), default=("label",),
                   help="columns to drop before prediction (default: label)")
    p.add_argument("--out", help="prediction CSV (default: stdout)")

    p = sub.add_parser("evaluate", help="transparency, accuracy and complexity on a CSV")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--out", help="JSON report (default: stdout)")

    p = sub.add_parser("frontier", help="sweep alphas and write a frontier CSV")
    _add_data(p)
    p.add_argument("--test", help="evaluation CSV (default: split --data)")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--kind", choices=(RULES, LINEAR), default=RULES)
    _add_alphas(p, many=True)
    _add_rule_knobs(p)
    _add_search_knobs(p)
    p.add_argument("--loss", choices=LOSS_KINDS, default="hinge")
    p.add_argument("--mu", type=_nonneg, default=1e-4)
    p.add_argument("--apg-iterations", type=_positive_int, default=5000)
    p.add_argument("--tol", type=_nonneg, default=1e-4)
    p.add_argument("--eta0", type=float, default=1.0)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--models-dir", help="also save every trained model here")
    p.add_argument("--pareto", action="store_true", help="keep only non-dominated points")
    p.add_argument("--diagnostics", action="store_true",
                   help="add per-route accuracy and status columns")
    _add_seed(p)
    p.add_argument("--out", required=True, help="frontier CSV to write")

    p = sub.add_parser("verify", help="run the built-in self-checks")
    p.add_argument("--checks", type=lambda s: tuple(s.split(",")), default=(),
                   help="comma-separated subset such as c1,c5 (default: all)")
    return parser


# ---------------------------------------------------------------------------
# Commands


def _require_file(path) -> None:
    if not Path(path).is_file():
        raise DataError(f"{path}: no such file")


def _require_dir_for(path) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise DataError(f"{parent}: output directory does not exist")


def _write_text(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _cmd_mine(a) -> int:
    d = load_dataset(a.data, a.label, a.blackbox)
    b = binarize(d, a.quantiles)
    pool = mine_candidates(b, a.max_len, a.alpha1, a.alpha2, a.min_class_count, a.max_pool)
    _info(f"{len(b.conditions)} conditions, {len(pool.positive)} positive and "
          f"{len(pool.negative)} negative rules")
    _write_text(format_pool(pool, b), a.out)
    return 0


def _cmd_train_rules(a) -> int:
    _info(f"seed: {a.seed}")
    d = load_dataset(a.data, a.label, a.blackbox)
    b = binarize(d, a.quantiles)
    pool = mine_candidates(b, a.max_len, a.alpha1, a.alpha2, a.min_class_count, a.max_pool)
    model = train(b, pool, a.alpha1, a.alpha2, T=a.iterations, C0=a.c0, seed=a.seed,
                  restarts=a.restarts, epsilon=a.epsilon)
    model = replace(model, features=tuple(zip(d.feature_names, d.kinds)))
    save_model(model, a.out)
    _info(f"objective {model.training_objective:.6f}, {len(model.pair.positive)} positive and "
          f"{len(model.pair.negative)} negative rules -> {a.out}")
    return 0


def _cmd_train_linear(a) -> int:
    _info(f"seed: {a.seed}")
    d = load_dataset(a.data, a.label, a.blackbox)
    cfg = ApgConfig(eta0=a.eta0, T=a.iterations, tol=a.tol)
    model = apg_train(d, a.alpha1, a.alpha2, LossSpec(a.loss, a.mu), cfg, seed=a.seed)
    save_model(model, a.out)
    _info(f"objective {model.objective:.6f}, {model.nonzero} nonzero coefficients, "
          f"theta+ {model.theta_plus:.6f}, theta- {model.theta_minus:.6f} -> {a.out}")
    return 0


def _predict(model, table, yb):
    if isinstance(model, HybridLinearModel):
        return predict_linear_batch(model, table, yb)
    check_schema(model, table)
    return predict_batch(model, table, yb)


def _cmd_predict(a) -> int:
    _require_file(a.model)
    _require_file(a.data)
    if a.out:
        _require_dir_for(a.out)
    model = load_model(a.model)
    table, yb = load_table(a.data, a.blackbox, ignore=a.ignore)
    labels, routes = _predict(model, table, yb)
    out = open(a.out, "w", newline="", encoding="utf-8") if a.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["row", "label", "route"])
        for i, (lab, route) in enumerate(zip(labels, routes)):
            w.writerow([i, int(lab), RouteTag(route).value])
    finally:
        if a.out:
            out.close()
    return 0


def _cmd_evaluate(a) -> int:
    _require_file(a.model)
    model = load_model(a.model)
    d = load_dataset(a.data, a.label, a.blackbox)
    if not isinstance(model, HybridLinearModel):
        check_schema(model, d)
    p = evaluate(model, d)
    report = {"transparency": p.transparency, "accuracy": p.accuracy,
              "complexity": p.complexity, "interpretable_accuracy": p.interpretable_accuracy,
              "blackbox_accuracy": p.blackbox_accuracy, "blackbox_only_accuracy":
              d.blackbox_accuracy(), "kind": p.kind, "rows": d.n}
    report = {k: (None if isinstance(v, float) and v != v else v) for k, v in report.items()}
    _write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", a.out)
    return 0


def _cmd_frontier(a) -> int:
    _info(f"seed: {a.seed}")
    _require_dir_for(a.out)
    d = load_dataset(a.data, a.label, a.blackbox)
    if a.test:
        train_d, test_d = d, load_dataset(a.test, a.label, a.blackbox)
    else:
        _info(f"split seed: {a.split_seed}")
        train_d, test_d = split(d, SplitSpec(a.train_fraction, a.split_seed))
    rules = RuleSettings(a.max_len, tuple(a.quantiles), a.min_class_count, a.max_pool,
                         a.iterations, a.c0, a.restarts, a.epsilon)
    linear = LinearSettings(LossSpec(a.loss, a.mu),
                            ApgConfig(eta0=a.eta0, T=a.apg_iterations, tol=a.tol))
    grid = SweepGrid(a.alpha1, a.alpha2, rules, linear)
    points = sweep(train_d, test_d, grid, a.kind, seed=a.seed, jobs=a.jobs,
                   models_dir=a.models_dir)
    failed = sum(p.failed for p in points)
    if failed:
        _info(f"warning: {failed} grid cells failed (sentinel rows written)")
    if a.pareto:
        points = pareto(points)
    export_frontier(points, a.out, diagnostics=a.diagnostics)
    _info(f"{len(points)} points -> {a.out}")
    return 0


def _cmd_verify(a) -> int:
    from .verify import run_checks
    results = run_checks(a.checks)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    _info(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 2


COMMANDS = {
    "mine": _cmd_mine,
    "train-rules": _cmd_train_rules,
    "train-linear": _cmd_train_linear,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "frontier": _cmd_frontier,
    "verify": _cmd_verify,
}


def run(argv=None) -> int:
    """Parse ``argv`` and run the command; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _info(f"error: {exc}")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if hasattr(args, "data") and args.command != "predict":
            _require_file(args.data)
        if getattr(args, "out", None) and args.command != "predict":
            _require_dir_for(args.out)
        return COMMANDS[args.command](args)
    except (DataError, SchemaError, ModelFormatError, KeyError, ValueError) as exc:
        _info(f"error: {exc}")
        return 1
    except Exception as exc:
        _info(f"runtime failure: {type(exc).__name__}: {exc}")
        return 2


def main() -> None:
    sys.exit(run())
