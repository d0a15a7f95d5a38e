"""Hybrid rule sets: a positive and a negative rule set in front of a black box.

An instance covered by the positive rules is labeled +1, otherwise one
covered by the negative rules is labeled -1, and everything else is left to
the black-box prediction. Training minimizes

    error + alpha1 * (number of conditions) - alpha2 * (fraction covered)

by an annealed local search over subsets of a mined candidate pool.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .rules import (CandidatePool, Condition, Rule, SchemaError, covers_set,
                    precision, rule_coverage, set_coverage)

DEFAULT_ITERATIONS = 5000
DEFAULT_C0 = 0.01
DEFAULT_RESTARTS = 3
DEFAULT_EPSILON = 0.1


class RouteTag(str, enum.Enum):
    POSITIVE_RULES = "positive_rules"
    NEGATIVE_RULES = "negative_rules"
    LINEAR = "linear"
    BLACKBOX = "blackbox"

    def __str__(self):
        # numpy converts scalars through str(); keep that equal to the value
        return self.value


@dataclass(frozen=True)
class RuleSetPair:
    positive: tuple[Rule, ...] = ()
    negative: tuple[Rule, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "positive", tuple(self.positive))
        object.__setattr__(self, "negative", tuple(self.negative))
        for side in (self.positive, self.negative):
            if len(set(side)) != len(side):
                raise ValueError("duplicate rule within a rule set")

    @property
    def empty(self) -> bool:
        return not self.positive and not self.negative


@dataclass(frozen=True)
class HybridRuleSetModel:
    pair: RuleSetPair
    alpha1: float
    alpha2: float
    training_objective: float
    conditions: tuple[Condition, ...] = ()
    features: tuple[tuple[str, str], ...] = ()
    info: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# Prediction and the objective terms


def predict(m, x: Mapping, yb: int) -> tuple[int, RouteTag]:
    """Route one instance (feature name -> value) with black-box label ``yb``."""
    pair = m.pair if isinstance(m, HybridRuleSetModel) else m
    if covers_set(pair.positive, x):
        return 1, RouteTag.POSITIVE_RULES
    if covers_set(pair.negative, x):
        return -1, RouteTag.NEGATIVE_RULES
    return int(yb), RouteTag.BLACKBOX


def predict_batch(m, data, yb) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`predict`; returns labels and route tags (object array)."""
    pair = m.pair if isinstance(m, HybridRuleSetModel) else m
    cp = set_coverage(pair.positive, data)
    cm = set_coverage(pair.negative, data) & ~cp
    yb = np.asarray(yb)
    labels = np.where(cp, 1, np.where(cm, -1, yb)).astype(np.int8)
    routes = np.empty(len(labels), dtype=object)
    routes.fill(RouteTag.BLACKBOX)
    routes[cm] = RouteTag.NEGATIVE_RULES
    routes[cp] = RouteTag.POSITIVE_RULES
    return labels, routes


def misclassification_error(p: RuleSetPair, d) -> float:
    """Error of the hybrid model as the sum of its three error sources.

    False positives of the positive rules, positives caught by the negative
    rules, and black-box mistakes on uncovered instances, divided by N.
    """
    y = d.labels.astype(np.int64)
    yb = d.blackbox_labels.astype(np.int64)
    cp = set_coverage(p.positive, d).astype(np.int64)
    cm = set_coverage(p.negative, d).astype(np.int64)
    per_instance = ((1 - y) // 2 * cp
                    + (1 + y) // 2 * (1 - cp) * cm
                    + (1 - cp) * (1 - cm)
                    * ((1 + y) // 2 * (1 - yb) // 2 + (1 - y) // 2 * (1 + yb) // 2))
    return int(per_instance.sum()) / d.n


def transparency(p: RuleSetPair, d) -> float:
    """Fraction of instances covered by either rule set."""
    return int((set_coverage(p.positive, d) | set_coverage(p.negative, d)).sum()) / d.n


def complexity(p: RuleSetPair) -> int:
    return sum(r.length for r in p.positive) + sum(r.length for r in p.negative)


def objective(p: RuleSetPair, d, alpha1: float, alpha2: float) -> float:
    if alpha1 < 0 or alpha2 < 0:
        raise ValueError("alpha1 and alpha2 must be non-negative")
    return misclassification_error(p, d) + alpha1 * complexity(p) - alpha2 * transparency(p, d)


# ---------------------------------------------------------------------------
# Search


def _bitset(v: np.ndarray) -> int:
    return int.from_bytes(np.packbits(np.asarray(v, dtype=bool), bitorder="little").tobytes(),
                          "little")


def _members(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _nth_bit(mask: int, j: int, nbits: int) -> int:
    if nbits <= 128:
        for i in range(nbits):
            if (mask >> i) & 1:
                if j == 0:
                    return i
                j -= 1
        raise IndexError(j)
    raw = np.frombuffer(mask.to_bytes((nbits + 7) // 8, "little"), dtype=np.uint8)
    return int(np.flatnonzero(np.unpackbits(raw, bitorder="little"))[j])


@dataclass
class SearchState:
    """Annealing chain state; the temperature at step t is C0 ** (1 - t / T)."""

    current: RuleSetPair
    best: RuleSetPair
    lambda_best: float
    t: int
    T: int
    C0: float
    rng: random.Random

    @property
    def temperature(self) -> float:
        return self.C0 ** (1.0 - self.t / self.T)


class RuleSearch:
    """Precomputed bitsets for fast objective evaluation over one pool.

    Rule sets are stored as integer bitmasks over pool indices, and rule
    coverages as integer bitmasks over rows.
    """

    _CACHE_LIMIT = 200_000

    def __init__(self, d, pool: CandidatePool, alpha1: float, alpha2: float,
                 epsilon: float = DEFAULT_EPSILON):
        if alpha1 < 0 or alpha2 < 0:
            raise ValueError("alpha1 and alpha2 must be non-negative")
        self.d = d
        self.pool = pool
        self.alpha1 = float(alpha1)
        self.alpha2 = float(alpha2)
        self.epsilon = float(epsilon)
        self.n = n = d.n
        y, yb = d.labels, d.blackbox_labels
        self.all = (1 << n) - 1
        self.pos = _bitset(y == 1)
        self.neg = _bitset(y == -1)
        self.disagree = _bitset(y != yb)
        self.rules = (pool.positive, pool.negative)
        self.cov = []
        self.packed = []
        self.lengths = []
        self.prec = []
        for side, cls in zip(self.rules, (1, -1)):
            covs = [rule_coverage(r, d) for r in side]
            self.cov.append([_bitset(c) for c in covs])
            mat = np.array(covs, dtype=bool).reshape(len(side), n)
            self.packed.append(np.packbits(mat, axis=1, bitorder="little"))
            self.lengths.append([r.length for r in side])
            self.prec.append(np.array([precision(r, d, cls) for r in side], dtype=float))
        self._cache: dict = {}

    # -- state helpers ----------------------------------------------------

    def masks_of(self, p: RuleSetPair) -> tuple[int, int]:
        out = []
        for side, rules in enumerate(self.rules):
            index = {r: i for i, r in enumerate(rules)}
            m = 0
            for r in (p.positive, p.negative)[side]:
                if r not in index:
                    raise ValueError(f"rule {r} is not in the candidate pool")
                m |= 1 << index[r]
            out.append(m)
        return out[0], out[1]

    def pair_of(self, pm: int, nm: int) -> RuleSetPair:
        return RuleSetPair(tuple(self.rules[0][i] for i in _members(pm)),
                           tuple(self.rules[1][i] for i in _members(nm)))

    def evaluate(self, pm: int, nm: int) -> tuple:
        """(objective, positive cover, negative cover, conditions, covered count)."""
        key = (pm, nm)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        P = M = 0
        omega = 0
        cov0, cov1 = self.cov
        len0, len1 = self.lengths
        for i in _members(pm):
            P |= cov0[i]
            omega += len0[i]
        for i in _members(nm):
            M |= cov1[i]
            omega += len1[i]
        covered = P | M
        errors = ((P & self.neg).bit_count() + (M & ~P & self.pos).bit_count()
                  + (self.disagree & ~covered).bit_count())
        ncov = covered.bit_count()
        lam = errors / self.n + self.alpha1 * omega - self.alpha2 * (ncov / self.n)
        out = (lam, P, M, omega, ncov)
        if len(self._cache) >= self._CACHE_LIMIT:
            self._cache.clear()
        self._cache[key] = out
        return out

    def _covering(self, side: int, row: int) -> np.ndarray:
        col = (self.packed[side][:, row >> 3] >> (row & 7)) & 1
        return np.flatnonzero(col)

    def _pick(self, side: int, cands, rng: random.Random, best_high: bool) -> int:
        if len(cands) == 1:
            return int(cands[0])
        if rng.random() < self.epsilon:
            return int(cands[rng.randrange(len(cands))])
        arr = np.asarray(cands)
        p = self.prec[side][arr]
        return int(arr[np.argmax(p) if best_high else np.argmin(p)])

    @staticmethod
    def _with(masks: tuple[int, int], side: int, i: int, add: bool) -> tuple[int, int]:
        m = list(masks)
        m[side] = m[side] | (1 << i) if add else m[side] & ~(1 << i)
        return m[0], m[1]

    # -- actions ----------------------------------------------------------

    def _remove(self, masks, rng):
        sides = [s for s in (0, 1) if masks[s]]
        if not sides:
            return None
        side = sides[rng.randrange(len(sides))]
        i = self._pick(side, _members(masks[side]), rng, best_high=False)
        return self._with(masks, side, i, add=False)

    def _add(self, masks, covered, rng):
        uncovered = self.all & ~covered
        if uncovered:
            row = _nth_bit(uncovered, rng.randrange(uncovered.bit_count()), self.n)
            options = []
            for side in (0, 1):
                c = [i for i in self._covering(side, row).tolist() if not (masks[side] >> i) & 1]
                if c:
                    options.append((side, c))
            if options:
                side, c = options[rng.randrange(len(options))]
                return self._with(masks, side, self._pick(side, c, rng, True), add=True)
        options = []
        for side in (0, 1):
            if masks[side].bit_count() < len(self.rules[side]):
                options.append(side)
        if not options:
            return None
        side = options[rng.randrange(len(options))]
        c = [i for i in range(len(self.rules[side])) if not (masks[side] >> i) & 1]
        return self._with(masks, side, self._pick(side, c, rng, True), add=True)

    def _fix(self, masks, P, M, rng):
        covered = P | M
        wrong = ((P & self.neg) | (M & ~P & self.pos) | (self.disagree & ~covered)) & self.all
        if not wrong:
            return None
        row = _nth_bit(wrong, rng.randrange(wrong.bit_count()), self.n)
        bit = 1 << row
        if P & bit:
            # negative instance caught by a positive rule
            c = [i for i in _members(masks[0]) if self.cov[0][i] & bit]
            return self._with(masks, 0, self._pick(0, c, rng, False), add=False)
        if M & bit:
            # positive instance caught by a negative rule
            add_c = [i for i in self._covering(0, row).tolist() if not (masks[0] >> i) & 1]
            rem_c = [i for i in _members(masks[1]) if self.cov[1][i] & bit]
            if add_c and (not rem_c or rng.random() < 0.5):
                return self._with(masks, 0, self._pick(0, add_c, rng, True), add=True)
            return self._with(masks, 1, self._pick(1, rem_c, rng, False), add=False)
        side = 0 if self.pos & bit else 1
        c = [i for i in self._covering(side, row).tolist() if not (masks[side] >> i) & 1]
        if not c:
            return None
        return self._with(masks, side, self._pick(side, c, rng, True), add=True)

    def forced_action(self, pm: int, nm: int, lambda_best: float) -> str | None:
        """Action forced by the size and coverage bounds, if either is violated."""
        _, _, _, omega, ncov = self.evaluate(pm, nm)
        a1, a2 = self.alpha1, self.alpha2
        if a1 > 0 and omega > (lambda_best + a2) / a1:
            return "remove"
        if a2 > 0 and (pm or nm) and ncov < self.n * (a1 - lambda_best) / a2:
            return "add"
        return None

    def propose(self, pm: int, nm: int, lambda_best: float,
                rng: random.Random) -> tuple[int, int] | None:
        """A neighbor differing by one rule, or None when no move is possible."""
        _, P, M, _, _ = self.evaluate(pm, nm)
        masks = (pm, nm)
        forced = self.forced_action(pm, nm, lambda_best)
        actions = ["remove", "add", "fix"]
        if forced is not None:
            actions.remove(forced)
            rng.shuffle(actions)
            actions.insert(0, forced)
        else:
            rng.shuffle(actions)
        for a in actions:
            if a == "remove":
                out = self._remove(masks, rng)
            elif a == "add":
                out = self._add(masks, P | M, rng)
            else:
                out = self._fix(masks, P, M, rng)
            if out is not None:
                return out
        return None

    def run(self, T: int, C0: float, rng: random.Random, record: bool = False) -> dict:
        """One annealing chain from the empty pair; returns best masks and trace."""
        if T < 1:
            raise ValueError("T must be >= 1")
        if C0 <= 0:
            raise ValueError("C0 must be positive")
        pm = nm = 0
        lam_cur = self.evaluate(0, 0)[0]
        best, lam_best = (0, 0), lam_cur
        trace = [lam_best] if record else None
        for t in range(T):
            prop = self.propose(pm, nm, lam_best, rng)
            if prop is not None:
                lam_new = self.evaluate(*prop)[0]
                if lam_new <= lam_cur:
                    accept = True
                else:
                    temp = C0 ** (1.0 - t / T)
                    accept = rng.random() < math.exp((lam_cur - lam_new) / temp)
                if accept:
                    pm, nm = prop
                    lam_cur = lam_new
                    if lam_new < lam_best:
                        best, lam_best = prop, lam_new
            if record:
                trace.append(lam_best)
        return {"best": best, "lambda_best": lam_best, "trace": trace}


def propose(s: SearchState, d, pool: CandidatePool, alpha1: float, alpha2: float,
            epsilon: float = DEFAULT_EPSILON) -> RuleSetPair:
    """One proposal step from ``s.current`` (unchanged when no move exists)."""
    search = RuleSearch(d, pool, alpha1, alpha2, epsilon)
    pm, nm = search.masks_of(s.current)
    out = search.propose(pm, nm, s.lambda_best, s.rng)
    return s.current if out is None else search.pair_of(*out)


def chain_seeds(seed: int, restarts: int) -> list[int]:
    return [int(ss.generate_state(1)[0]) for ss in np.random.SeedSequence(seed).spawn(restarts)]


def train(d, pool: CandidatePool, alpha1: float, alpha2: float,
          T: int = DEFAULT_ITERATIONS, C0: float = DEFAULT_C0, seed: int = 42,
          restarts: int = DEFAULT_RESTARTS, epsilon: float = DEFAULT_EPSILON,
          record: bool = False) -> HybridRuleSetModel:
    """Run ``restarts`` independent chains and keep the best pair visited."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    search = RuleSearch(d, pool, alpha1, alpha2, epsilon)
    runs = [search.run(T, C0, random.Random(s), record=record)
            for s in chain_seeds(seed, restarts)]
    k = min(range(restarts), key=lambda i: (runs[i]["lambda_best"], i))
    pair = search.pair_of(*runs[k]["best"])
    obj = objective(pair, d, alpha1, alpha2)
    if abs(obj - runs[k]["lambda_best"]) > 1e-12:
        raise AssertionError("search objective disagrees with the closed form")
    info = {"seed": seed, "T": T, "C0": C0, "restarts": restarts, "epsilon": epsilon,
            "chain_objectives": [r["lambda_best"] for r in runs]}
    if record:
        info["traces"] = [r["trace"] for r in runs]
    conditions = tuple(getattr(d, "conditions", ()))
    return HybridRuleSetModel(pair, float(alpha1), float(alpha2), obj,
                              conditions=conditions, info=info)


def check_schema(m: HybridRuleSetModel, table) -> None:
    names = set(table.feature_names) if hasattr(table, "feature_names") else None
    for r in (*m.pair.positive, *m.pair.negative):
        for c in r.conditions:
            if names is not None and c.feature not in names:
                raise SchemaError(f"data has no feature {c.feature!r} used by the model")
