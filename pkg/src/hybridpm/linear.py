"""Hybrid linear models with two thresholds.

``w.x >= theta_plus`` predicts +1, ``w.x <= theta_minus`` predicts -1 and the
band in between is left to the black box. Training minimizes

    F = L_mu(w, theta_plus, theta_minus) + alpha1 * ||w||_1
        + alpha2 * (theta_plus - theta_minus)

subject to ``theta_plus >= theta_minus`` with an accelerated proximal
gradient method on the (Nesterov-)smoothed loss and a backtracking step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import CATEGORICAL, FeatureTable
from .rules import SchemaError
from .ruleset import RouteTag

HINGE = "hinge"
SMOOTHED_HINGE = "smoothed_hinge"
LOGISTIC = "logistic"
LOSS_KINDS = (HINGE, SMOOTHED_HINGE, LOGISTIC)


class LinearTrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossSpec:
    kind: str = HINGE
    mu: float = 1e-4

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.kind == HINGE and self.mu == 0:
            raise ValueError("the hinge loss needs mu > 0 to be smoothed")


@dataclass(frozen=True)
class ApgConfig:
    eta0: float = 1.0
    alpha0: float = 0.5
    T: int = 5000
    tol: float = 1e-4
    shrink: float = 0.5
    grow: float = 2.0
    window: int = 10
    max_backtracks: int = 100

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if not 0 < self.alpha0 < 1:
            raise ValueError("alpha0 must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.grow < 1:
            raise ValueError("grow must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")


# ---------------------------------------------------------------------------
# Losses


def loss_phi(kind: str, z):
    """Unsmoothed margin loss."""
    z = np.asarray(z, dtype=float)
    if kind == HINGE:
        return np.maximum(1.0 - z, 0.0)
    if kind == SMOOTHED_HINGE:
        return 0.5 * np.maximum(1.0 - z, 0.0) ** 2
    if kind == LOGISTIC:
        return np.logaddexp(0.0, -z)
    raise ValueError(f"unknown loss {kind!r}")


def _hinge_dual(z, mu):
    return np.clip((z - 1.0) / mu, -1.0, 0.0)


def smoothed_phi(kind: str, z, mu: float):
    """Smoothed loss sup_a {z a - phi*(a) - mu a^2 / 2}.

    Only the hinge loss is smoothed; for it the supremum is attained at
    ``a = clip((z - 1) / mu, -1, 0)``. Differentiable losses are returned
    unchanged, as is the hinge when ``mu == 0``.
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    if kind != HINGE or mu == 0:
        return loss_phi(kind, z)
    z = np.asarray(z, dtype=float)
    a = _hinge_dual(z, mu)
    return a * (z - 1.0) - 0.5 * mu * a * a


def smoothed_phi_grad(kind: str, z, mu: float):
    """Derivative of :func:`smoothed_phi` with respect to ``z``."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    z = np.asarray(z, dtype=float)
    if kind == HINGE:
        if mu == 0:
            raise ValueError("the hinge loss is not differentiable; use mu > 0")
        return _hinge_dual(z, mu)
    if kind == SMOOTHED_HINGE:
        return -np.maximum(1.0 - z, 0.0)
    if kind == LOGISTIC:
        return -expit(-z)
    raise ValueError(f"unknown loss {kind!r}")


# ---------------------------------------------------------------------------
# Partitioned loss over a prepared design matrix


@dataclass(frozen=True, eq=False)
class Problem:
    """Standardized design matrix with labels and black-box labels."""

    X: np.ndarray
    y: np.ndarray
    yb: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "yb", np.asarray(self.yb))
        object.__setattr__(self, "_bb_pos", self.yb == 1)

    @property
    def n(self) -> int:
        return len(self.y)

    def margins(self, w, theta_plus, theta_minus):
        # black-box positives are judged against theta_minus, negatives against theta_plus
        theta = np.where(self._bb_pos, theta_minus, theta_plus)
        return self.y * (self.X @ np.asarray(w, dtype=float) - theta)


def smoothed_loss(w, theta_plus: float, theta_minus: float, prob: Problem,
                  spec: LossSpec) -> float:
    z = prob.margins(w, theta_plus, theta_minus)
    return float(np.sum(smoothed_phi(spec.kind, z, spec.mu)) / prob.n)


def loss_gradient(w, theta_plus: float, theta_minus: float, prob: Problem,
                  spec: LossSpec) -> tuple[np.ndarray, float, float]:
    """Gradient of :func:`smoothed_loss` in (w, theta_plus, theta_minus)."""
    z = prob.margins(w, theta_plus, theta_minus)
    g = smoothed_phi_grad(spec.kind, z, spec.mu) * prob.y / prob.n
    gw = prob.X.T @ g
    g_plus = -float(np.sum(g[~prob._bb_pos]))
    g_minus = -float(np.sum(g[prob._bb_pos]))
    return gw, g_plus, g_minus


def objective_F(w, theta_plus: float, theta_minus: float, prob: Problem, alpha1: float,
                alpha2: float, spec: LossSpec) -> float:
    return (smoothed_loss(w, theta_plus, theta_minus, prob, spec)
            + alpha1 * float(np.sum(np.abs(w))) + alpha2 * (theta_plus - theta_minus))


# ---------------------------------------------------------------------------
# Algorithm pieces


def prox_l1(v, t: float) -> np.ndarray:
    """Soft thresholding: sign(v) * max(|v| - t, 0)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def threshold_step(theta_plus_hat: float, theta_minus_hat: float, g_plus: float,
                   g_minus: float, alpha2: float, eta: float) -> tuple[float, float]:
    """Proximal step on the thresholds, projected onto theta_plus >= theta_minus."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    u_plus = theta_plus_hat - eta * (g_plus + alpha2)
    u_minus = theta_minus_hat - eta * (g_minus - alpha2)
    if u_plus >= u_minus:
        return u_plus, u_minus
    mid = 0.5 * (u_plus + u_minus)
    return mid, mid


def momentum_update(alpha_prev: float) -> tuple[float, float]:
    """Solve a^2 = (1 - a) * alpha_prev^2 for a in (0, 1) and the matching beta."""
    if not 0 < alpha_prev <= 1:
        raise ValueError("alpha_prev must lie in (0, 1]")
    a2 = alpha_prev * alpha_prev
    alpha = 0.5 * (math.sqrt(a2 * a2 + 4.0 * a2) - a2)
    beta = alpha_prev * (1.0 - alpha_prev) / (a2 + alpha)
    return alpha, beta


# ---------------------------------------------------------------------------
# Feature encoding


@dataclass(frozen=True)
class Encoding:
    """Expansion of raw features to model columns plus z-score parameters.

    Numeric features pass through; categorical features become one indicator
    column per training value.
    """

    columns: tuple[tuple[str, str, object], ...]  # (source feature, kind, value)
    mean: tuple[float, ...]
    scale: tuple[float, ...]

    @property
    def names(self) -> list[str]:
        return [f if k != CATEGORICAL else f"{f}=={v}" for f, k, v in self.columns]

    def raw_matrix(self, table: FeatureTable) -> np.ndarray:
        cols = []
        for f, k, v in self.columns:
            try:
                col, kind = table.column(f), table.kind(f)
            except KeyError:
                raise SchemaError(f"data has no feature {f!r} used by the model") from None
            if k == CATEGORICAL:
                cols.append((col.astype(str) == str(v)).astype(float))
            else:
                if kind == CATEGORICAL:
                    raise SchemaError(f"feature {f!r} must be numeric")
                cols.append(col.astype(float))
        if not cols:
            return np.zeros((table.n, 0))
        return np.column_stack(cols)

    def transform(self, table: FeatureTable) -> np.ndarray:
        return (self.raw_matrix(table) - np.array(self.mean)) / np.array(self.scale)


def fit_encoding(table: FeatureTable) -> Encoding:
    columns = []
    for f, col, kind in zip(table.feature_names, table.columns, table.kinds):
        if kind == CATEGORICAL:
            for v in sorted(set(col.tolist())):
                columns.append((f, CATEGORICAL, v))
        else:
            columns.append((f, kind, None))
    enc = Encoding(tuple(columns), (), ())
    raw = enc.raw_matrix(table)
    mean = raw.mean(axis=0) if raw.size else np.zeros(0)
    scale = raw.std(axis=0) if raw.size else np.zeros(0)
    scale = np.where(scale > 0, scale, 1.0)
    return Encoding(tuple(columns), tuple(float(m) for m in mean),
                    tuple(float(s) for s in scale))


# ---------------------------------------------------------------------------
# Model


@dataclass(frozen=True, eq=False)
class HybridLinearModel:
    w: np.ndarray
    theta_plus: float
    theta_minus: float
    encoding: Encoding
    loss: LossSpec = LossSpec()
    alpha1: float = 0.0
    alpha2: float = 0.0
    objective: float = float("nan")
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        if self.theta_plus < self.theta_minus:
            raise ValueError("theta_plus must be >= theta_minus")
        if any(s <= 0 for s in self.encoding.scale):
            raise ValueError("standardization scales must be positive")

    def scores(self, table: FeatureTable) -> np.ndarray:
        return self.encoding.transform(table) @ self.w

    @property
    def nonzero(self) -> int:
        return int(np.count_nonzero(self.w))


def route_scores(s, theta_plus: float, theta_minus: float, yb):
    s = np.asarray(s, dtype=float)
    yb = np.asarray(yb)
    pos = s >= theta_plus
    neg = ~pos & (s <= theta_minus)
    labels = np.where(pos, 1, np.where(neg, -1, yb)).astype(np.int8)
    routes = np.empty(len(labels), dtype=object)
    routes.fill(RouteTag.BLACKBOX)
    routes[pos | neg] = RouteTag.LINEAR
    return labels, routes


def predict_linear(m: HybridLinearModel, x, yb: int) -> tuple[int, RouteTag]:
    """Route one instance given as a mapping feature -> value."""
    table = _single_row_table(m, x)
    s = float(m.scores(table)[0])
    labels, routes = route_scores([s], m.theta_plus, m.theta_minus, [yb])
    return int(labels[0]), routes[0]


def predict_linear_batch(m: HybridLinearModel, table: FeatureTable, yb):
    return route_scores(m.scores(table), m.theta_plus, m.theta_minus, yb)


def _single_row_table(m: HybridLinearModel, x) -> FeatureTable:
    names, cols, kinds = [], [], []
    for f, k, _ in m.encoding.columns:
        if f in names:
            continue
        if f not in x:
            raise SchemaError(f"instance has no feature {f!r}")
        names.append(f)
        if k == CATEGORICAL:
            cols.append(np.array([str(x[f])], dtype=object))
        else:
            cols.append(np.array([float(x[f])]))
        kinds.append(k)
    return FeatureTable(tuple(names), tuple(cols), tuple(kinds))


def problem_from(d, encoding: Encoding) -> Problem:
    return Problem(encoding.transform(d), d.labels, d.blackbox_labels)


def model_objective(m: HybridLinearModel, d, alpha1: float, alpha2: float,
                    spec: LossSpec) -> float:
    """F of a fitted model on a dataset (using the model's standardization)."""
    return objective_F(m.w, m.theta_plus, m.theta_minus, problem_from(d, m.encoding),
                       alpha1, alpha2, spec)


# ---------------------------------------------------------------------------
# Solver


def apg_solve(prob: Problem, alpha1: float, alpha2: float, spec: LossSpec,
              cfg: ApgConfig = ApgConfig(), w0=None, theta0=(1.0, -1.0)) -> dict:
    """Smoothing APG with backtracking; returns the best iterate visited."""
    if alpha1 < 0 or alpha2 < 0:
        raise ValueError("alpha1 and alpha2 must be non-negative")
    d = prob.X.shape[1]
    x = (np.zeros(d) if w0 is None else np.asarray(w0, dtype=float).copy(),
         float(theta0[0]), float(theta0[1]))
    if x[1] < x[2]:
        raise ValueError("initial thresholds need theta_plus >= theta_minus")

    def F(p):
        return objective_F(p[0], p[1], p[2], prob, alpha1, alpha2, spec)

    f_cur = F(x)
    best, f_best = x, f_cur
    history = [f_cur]
    gaps = [x[1] - x[2]]
    x_hat = x
    alpha = cfg.alpha0
    eta = cfg.eta0
    restarts = 0
    t = 0
    for t in range(1, cfg.T + 1):
        eta *= cfg.grow
        L_hat = smoothed_loss(*x_hat, prob, spec)
        gw, gp, gm = loss_gradient(*x_hat, prob, spec)
        for _ in range(cfg.max_backtracks):
            w_new = prox_l1(x_hat[0] - eta * gw, eta * alpha1)
            tp, tm = threshold_step(x_hat[1], x_hat[2], gp, gm, alpha2, eta)
            dw, dp, dm = w_new - x_hat[0], tp - x_hat[1], tm - x_hat[2]
            L_new = smoothed_loss(w_new, tp, tm, prob, spec)
            sq = float(dw @ dw) + dp * dp + dm * dm
            model = L_hat + float(gw @ dw) + gp * dp + gm * dm + sq / (2.0 * eta)
            if L_new <= model + 1e-12 * max(1.0, abs(L_hat)):
                break
            eta *= cfg.shrink
        else:
            raise LinearTrainingError(f"line search failed at iteration {t}")
        x_new = (w_new, tp, tm)
        f_new = L_new + alpha1 * float(np.sum(np.abs(w_new))) + alpha2 * (tp - tm)
        if not math.isfinite(f_new):
            raise LinearTrainingError(f"non-finite objective at iteration {t}")
        if f_new > f_cur + 10.0 * cfg.tol * max(abs(f_cur), 1e-12):
            # momentum restart
            alpha = cfg.alpha0
            x_hat = x_new
            restarts += 1
        else:
            alpha, beta = momentum_update(alpha)
            x_hat = tuple(a + beta * (a - b) for a, b in zip(x_new, x))
        x, f_cur = x_new, f_new
        history.append(f_cur)
        gaps.append(tp - tm)
        if f_cur < f_best:
            best, f_best = x, f_cur
        k = cfg.window
        if len(history) > k:
            ref = history[-1 - k]
            if abs(f_cur - ref) <= cfg.tol * max(abs(ref), 1e-12):
                break
    return {"w": best[0], "theta_plus": best[1], "theta_minus": best[2],
            "objective": f_best, "iterations": t, "restarts": restarts,
            "history": history, "gaps": gaps}


def apg_train(d, alpha1: float, alpha2: float, spec: LossSpec = LossSpec(),
              cfg: ApgConfig = ApgConfig(), seed: int = 42) -> HybridLinearModel:
    """Fit a hybrid linear model on ``d`` (features z-scored on ``d``).

    The solver is deterministic; ``seed`` is only recorded with the model.
    """
    enc = fit_encoding(d)
    prob = problem_from(d, enc)
    out = apg_solve(prob, alpha1, alpha2, spec, cfg)
    info = {"seed": seed, "iterations": out["iterations"], "restarts": out["restarts"]}
    return HybridLinearModel(out["w"], out["theta_plus"], out["theta_minus"], enc, spec,
                             float(alpha1), float(alpha2), out["objective"], info)
