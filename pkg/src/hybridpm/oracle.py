"""Slow, simple reference computations used to check the fast paths.

Nothing here is tuned for speed; every function is meant to be obviously
correct on tiny inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .data import BinaryDataset, Dataset
from .linear import (HybridLinearModel, LossSpec, Problem, fit_encoding, predict_linear,
                     problem_from, smoothed_phi)
from .rules import CandidatePool, Condition, min_support_bounds, mine_candidates, rule_coverage
from .ruleset import HybridRuleSetModel, RouteTag, RuleSetPair

MAX_SUBSET_SPACE = 10 ** 6


class OracleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Rule sets


def _subsets(k: int, cap: int | None):
    """Subsets of range(k) as sorted tuples, ordered by their bitmask encoding."""
    for code in range(1 << k):
        members = tuple(i for i in range(k) if (code >> i) & 1)
        if cap is None or len(members) <= cap:
            yield members


def _space(k: int, cap: int | None) -> int:
    top = k if cap is None else min(cap, k)
    return sum(comb(k, j) for j in range(top + 1))


def brute_force_ruleset(pool: CandidatePool, d, alpha1: float, alpha2: float,
                        max_rules_per_side: int | None = None) -> tuple[RuleSetPair, float]:
    """Exact minimizer of the rule-set objective over all pairs of pool subsets."""
    space = _space(len(pool.positive), max_rules_per_side) * _space(len(pool.negative),
                                                                    max_rules_per_side)
    if space > MAX_SUBSET_SPACE:
        raise OracleError(f"subset space {space} exceeds {MAX_SUBSET_SPACE}")
    n = d.n
    y = d.labels.astype(np.int64)
    wrong_bb = (d.labels != d.blackbox_labels).astype(np.int64)
    is_pos = (y == 1).astype(np.int64)
    is_neg = 1 - is_pos

    def unions(rules):
        covs = [rule_coverage(r, d).astype(np.int64) for r in rules]
        out = []
        for members in _subsets(len(rules), max_rules_per_side):
            c = np.zeros(n, dtype=np.int64)
            for i in members:
                c = np.maximum(c, covs[i])
            out.append((members, c, sum(rules[i].length for i in members)))
        return out

    best = None
    for pm, cp, op in unions(pool.positive):
        for nm, cm, on in unions(pool.negative):
            errors = (is_neg * cp + is_pos * (1 - cp) * cm + (1 - cp) * (1 - cm) * wrong_bb).sum()
            covered = np.maximum(cp, cm).sum()
            lam = int(errors) / n + alpha1 * (op + on) - alpha2 * (int(covered) / n)
            if best is None or lam < best[0]:
                best = (lam, pm, nm)
    lam, pm, nm = best
    pair = RuleSetPair(tuple(pool.positive[i] for i in pm), tuple(pool.negative[i] for i in nm))
    return pair, lam


def _row_covered(rule, d, i: int) -> bool:
    if isinstance(d, BinaryDataset):
        return all(bool(d.bits[i, d.condition_index(c)]) for c in rule.conditions)
    x = d.row(i)
    return all(c.holds(x[c.feature]) for c in rule.conditions)


def simulate_process(model, d) -> tuple[float, float]:
    """Apply the routing row by row; returns (error rate, transparency)."""
    wrong = routed = 0
    for i in range(d.n):
        yb = int(d.blackbox_labels[i])
        if isinstance(model, HybridLinearModel):
            label, route = predict_linear(model, d.row(i), yb)
        else:
            pair = model.pair if isinstance(model, HybridRuleSetModel) else model
            if any(_row_covered(r, d, i) for r in pair.positive):
                label, route = 1, RouteTag.POSITIVE_RULES
            elif any(_row_covered(r, d, i) for r in pair.negative):
                label, route = -1, RouteTag.NEGATIVE_RULES
            else:
                label, route = yb, RouteTag.BLACKBOX
        wrong += int(label != d.labels[i])
        routed += int(route != RouteTag.BLACKBOX)
    return wrong / d.n, routed / d.n


# ---------------------------------------------------------------------------
# Tiny random instances


@dataclass(frozen=True)
class TinyInstance:
    data: BinaryDataset
    universe: CandidatePool
    pool: CandidatePool
    alpha1: float
    alpha2: float
    seed: int


def make_tiny_instance(seed: int, n_range=(20, 40), n_features=(4, 6), per_side: int = 6,
                       alpha1_range=(0.001, 0.06), alpha2_range=(0.001, 0.5),
                       max_len: int = 2) -> TinyInstance:
    """Random binary dataset with at most ``2 * per_side`` candidate rules.

    ``universe`` is an unpruned random sample of mined rules; ``pool`` is the
    universe after the minimum-support pruning for the drawn alphas.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    k = int(rng.integers(n_features[0], n_features[1] + 1))
    X = rng.random((n, k)) < 0.5
    signal = (X[:, 0] & X[:, 1]) | (X[:, 2] & ~X[:, 3])
    y = np.where(signal ^ (rng.random(n) < 0.1), 1, -1)
    yb = np.where(rng.random(n) < 0.3, -y, y)
    conds, cols = [], []
    for j in range(k):
        conds += [Condition(f"x{j}", "==", "1"), Condition(f"x{j}", "==", "0")]
        cols += [X[:, j], ~X[:, j]]
    d = BinaryDataset(tuple(conds), np.column_stack(cols), y, yb)
    mined = mine_candidates(d, max_len=max_len, alpha1=0.0, alpha2=0.0, max_pool=None)
    sides = []
    for rules in (mined.positive, mined.negative):
        take = min(per_side, len(rules))
        idx = np.sort(rng.choice(len(rules), size=take, replace=False)) if take else []
        sides.append(tuple(rules[i] for i in idx))
    universe = CandidatePool(sides[0], sides[1])
    a1 = float(rng.uniform(*alpha1_range))
    a2 = float(rng.uniform(*alpha2_range))
    pos_floor, neg_floor = min_support_bounds(n, a1, a2)
    pool = universe.restrict(d, pos_floor, neg_floor)
    return TinyInstance(d, universe, pool, a1, a2, seed)


# ---------------------------------------------------------------------------
# Linear models


def finite_diff(fn, point, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(point, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def grid_minimize_linear(d, alpha1: float, alpha2: float, spec: LossSpec,
                         resolution: int = 200, w_bound: float = 4.0,
                         theta_bound: float = 4.0) -> tuple[float, tuple]:
    """Minimum of F over a uniform grid of (w, theta_plus, theta_minus).

    ``d`` is a Dataset (standardized like :func:`~hybridpm.linear.apg_train`)
    or a prepared :class:`~hybridpm.linear.Problem` with at most two columns.
    The axes are ``linspace(-bound, bound, resolution + 1)`` so grids whose
    resolutions are multiples of each other are nested. Returns the minimum
    and its grid point ``(w, theta_plus, theta_minus)``.
    """
    prob = d if isinstance(d, Problem) else problem_from(d, fit_encoding(d))
    if prob.X.shape[1] > 2:
        raise OracleError("grid search supports at most two features")
    w_axis = np.linspace(-w_bound, w_bound, resolution + 1)
    th = np.linspace(-theta_bound, theta_bound, resolution + 1)
    bb_pos = prob.yb == 1
    n = prob.n
    best = (np.inf, None)
    for w in itertools.product(w_axis, repeat=prob.X.shape[1]):
        w = np.array(w)
        s = prob.X @ w
        # separable in the thresholds: theta_minus only touches black-box positives
        zm = prob.y[bb_pos, None] * (s[bb_pos, None] - th[None, :])
        zp = prob.y[~bb_pos, None] * (s[~bb_pos, None] - th[None, :])
        f_minus = smoothed_phi(spec.kind, zm, spec.mu).sum(axis=0) / n - alpha2 * th
        f_plus = smoothed_phi(spec.kind, zp, spec.mu).sum(axis=0) / n + alpha2 * th
        prefix = np.minimum.accumulate(f_minus)
        total = f_plus + prefix
        j = int(np.argmin(total))
        val = float(total[j]) + alpha1 * float(np.abs(w).sum())
        if val < best[0]:
            i = int(np.argmin(f_minus[: j + 1]))
            best = (val, (w, float(th[j]), float(th[i])))
    return best
