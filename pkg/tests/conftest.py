import numpy as np
import pytest

from hybridpm.data import BinaryDataset
from hybridpm.rules import Condition, Rule


def bit_conditions(k):
    """``x{j}==1`` / ``x{j}==0`` descriptors for k binary features."""
    conds = []
    for j in range(k):
        conds += [Condition(f"x{j}", "==", "1"), Condition(f"x{j}", "==", "0")]
    return tuple(conds)


def binary_data(X, y, yb):
    """BinaryDataset over 0/1 features with one column per value."""
    X = np.asarray(X, dtype=bool)
    cols = []
    for j in range(X.shape[1]):
        cols += [X[:, j], ~X[:, j]]
    return BinaryDataset(bit_conditions(X.shape[1]), np.column_stack(cols), y, yb)


def rule(*pairs):
    """rule(("x0", 1), ("x1", 0)) -> x0==1 AND x1==0."""
    return Rule(tuple(Condition(f, "==", str(v)) for f, v in pairs))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def same_point(p, q):
    """Field-wise equality that treats NaN as equal to NaN."""
    import dataclasses
    import math
    for a, b in zip(dataclasses.astuple(p), dataclasses.astuple(q)):
        if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
            continue
        if a != b:
            return False
    return True
