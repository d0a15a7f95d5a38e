"""Versioned JSON model files for both model kinds."""

from __future__ import annotations

import json
import math
from pathlib import Path

from .linear import Encoding, HybridLinearModel, LossSpec
from .rules import Condition, Rule
from .ruleset import HybridRuleSetModel, RuleSetPair

FORMAT_VERSION = 1
RULES_KIND = "hybrid_rules"
LINEAR_KIND = "hybrid_linear"


class ModelFormatError(ValueError):
    pass


def _num(v: float):
    # JSON has no NaN/inf; keep them as strings so files stay strict JSON
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _unnum(v) -> float:
    return float(v)


def _plain(obj):
    """Info dicts may hold numpy scalars or tuples; make them JSON-native."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item"):
        obj = obj.item()
    if isinstance(obj, float):
        return _num(obj)
    return obj


def rules_to_dict(m: HybridRuleSetModel) -> dict:
    info = {k: v for k, v in m.info.items() if k != "traces"}
    return {
        "format_version": FORMAT_VERSION,
        "kind": RULES_KIND,
        "alpha1": _num(m.alpha1),
        "alpha2": _num(m.alpha2),
        "positive_rules": [r.to_list() for r in m.pair.positive],
        "negative_rules": [r.to_list() for r in m.pair.negative],
        "training_objective": _num(m.training_objective),
        "conditions": [c.to_dict() for c in m.conditions],
        "features": [{"name": f, "kind": k} for f, k in m.features],
        "search": _plain(info),
    }


def linear_to_dict(m: HybridLinearModel) -> dict:
    enc = m.encoding
    return {
        "format_version": FORMAT_VERSION,
        "kind": LINEAR_KIND,
        "alpha1": _num(m.alpha1),
        "alpha2": _num(m.alpha2),
        "columns": [{"feature": f, "kind": k, "value": v} for f, k, v in enc.columns],
        "feature_names": enc.names,
        "coefficients": [_num(v) for v in m.w],
        "theta_plus": _num(m.theta_plus),
        "theta_minus": _num(m.theta_minus),
        "standardization": {"mean": [_num(v) for v in enc.mean],
                            "scale": [_num(v) for v in enc.scale]},
        "loss": m.loss.kind,
        "mu": _num(m.loss.mu),
        "objective": _num(m.objective),
        "solver": _plain(m.info),
    }


def model_to_dict(m) -> dict:
    if isinstance(m, HybridRuleSetModel):
        return rules_to_dict(m)
    if isinstance(m, HybridLinearModel):
        return linear_to_dict(m)
    raise TypeError(f"cannot serialize {type(m).__name__}")


def dumps(m) -> str:
    return json.dumps(model_to_dict(m), sort_keys=True, indent=2) + "\n"


def save_model(m, path) -> None:
    Path(path).write_text(dumps(m), encoding="utf-8")


def model_from_dict(d: dict):
    if not isinstance(d, dict):
        raise ModelFormatError("model file must contain a JSON object")
    version = d.get("format_version")
    if not isinstance(version, int):
        raise ModelFormatError("model file has no integer format_version")
    if version > FORMAT_VERSION:
        raise ModelFormatError(f"model format version {version} is newer than the "
                               f"supported version {FORMAT_VERSION}")
    if version < 1:
        raise ModelFormatError(f"invalid model format version {version}")
    kind = d.get("kind")
    try:
        if kind == RULES_KIND:
            pair = RuleSetPair(tuple(Rule.from_list(r) for r in d["positive_rules"]),
                               tuple(Rule.from_list(r) for r in d["negative_rules"]))
            return HybridRuleSetModel(
                pair, _unnum(d["alpha1"]), _unnum(d["alpha2"]),
                _unnum(d["training_objective"]),
                conditions=tuple(Condition.from_dict(c) for c in d["conditions"]),
                features=tuple((f["name"], f["kind"]) for f in d["features"]),
                info=dict(d.get("search", {})))
        if kind == LINEAR_KIND:
            std = d["standardization"]
            enc = Encoding(tuple((c["feature"], c["kind"], c["value"]) for c in d["columns"]),
                           tuple(_unnum(v) for v in std["mean"]),
                           tuple(_unnum(v) for v in std["scale"]))
            return HybridLinearModel(
                [_unnum(v) for v in d["coefficients"]], _unnum(d["theta_plus"]),
                _unnum(d["theta_minus"]), enc, LossSpec(d["loss"], _unnum(d["mu"])),
                _unnum(d["alpha1"]), _unnum(d["alpha2"]), _unnum(d["objective"]),
                dict(d.get("solver", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed {kind} model: {exc}") from exc
    raise ModelFormatError(f"unknown model kind {kind!r}")


def load_model(path):
    p = Path(path)
    try:
        d = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{p}: not valid JSON ({exc})") from exc
    return model_from_dict(d)
