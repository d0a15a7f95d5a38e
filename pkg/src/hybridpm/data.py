"""Labeled tables carrying black-box predictions, binarization and splits.

A :class:`Dataset` is the only channel through which a black-box model is
seen: a column of its hard predictions next to the true labels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"

DEFAULT_QUANTILES = (0.25, 0.5, 0.75)


class DataError(ValueError):
    """Raised for malformed input tables."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Feature columns without labels, as needed for prediction."""

    feature_names: tuple[str, ...]
    columns: tuple[np.ndarray, ...]
    kinds: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("duplicate feature names")
        if not (len(self.feature_names) == len(self.columns) == len(self.kinds)):
            raise DataError("feature names, columns and kinds differ in length")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise DataError("feature columns differ in length")
        for c in self.columns:
            _frozen(c)

    @property
    def n(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[self.feature_names.index(name)]
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def kind(self, name: str) -> str:
        try:
            return self.kinds[self.feature_names.index(name)]
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def row(self, i: int) -> dict:
        return {f: c[i] for f, c in zip(self.feature_names, self.columns)}

    def take(self, idx) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable(self.feature_names,
                            tuple(c[idx].copy() for c in self.columns), self.kinds)


@dataclass(frozen=True, eq=False)
class Dataset(FeatureTable):
    """Feature table plus true labels and black-box labels, both in {-1, +1}."""

    labels: np.ndarray = field(default=None)
    blackbox_labels: np.ndarray = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        y = np.asarray(self.labels, dtype=np.int8)
        yb = np.asarray(self.blackbox_labels, dtype=np.int8)
        if y.ndim != 1 or len(y) < 1:
            raise DataError("dataset must contain at least one instance")
        if len(yb) != len(y) or (self.columns and self.n != len(y)):
            raise DataError("labels, black-box labels and rows differ in length")
        for name, v in (("labels", y), ("blackbox_labels", yb)):
            if not np.all((v == 1) | (v == -1)):
                raise DataError(f"{name} must be in {{-1, +1}}")
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "blackbox_labels", _frozen(yb))

    @property
    def n(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        t = FeatureTable.take(self, idx)
        return Dataset(t.feature_names, t.columns, t.kinds,
                       labels=self.labels[idx].copy(),
                       blackbox_labels=self.blackbox_labels[idx].copy())

    def blackbox_accuracy(self) -> float:
        return float(np.mean(self.labels == self.blackbox_labels))

    def equals(self, other: "Dataset") -> bool:
        if (self.feature_names != other.feature_names or self.kinds != other.kinds
                or not np.array_equal(self.labels, other.labels)
                or not np.array_equal(self.blackbox_labels, other.blackbox_labels)):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.columns, other.columns))


def make_dataset(features: dict, labels, blackbox_labels) -> Dataset:
    """Build a dataset from a mapping of column name to values.

    Columns whose values are all real numbers become numeric, everything else
    is treated as categorical strings.
    """
    names, cols, kinds = [], [], []
    for name, values in features.items():
        kind, col = _infer_column(list(values))
        names.append(name)
        cols.append(col)
        kinds.append(kind)
    return Dataset(tuple(names), tuple(cols), tuple(kinds),
                   labels=labels, blackbox_labels=blackbox_labels)


def _infer_column(values: list) -> tuple[str, np.ndarray]:
    try:
        col = np.array([float(v) for v in values], dtype=np.float64)
    except (TypeError, ValueError):
        return CATEGORICAL, np.array([str(v) for v in values], dtype=object)
    if not np.all(np.isfinite(col)):
        return CATEGORICAL, np.array([str(v) for v in values], dtype=object)
    return NUMERIC, col


# ---------------------------------------------------------------------------
# CSV input / output


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    seen = set()
    for j, h in enumerate(header):
        if h in seen:
            raise DataError(f"{path}: duplicate column {h!r} (column {j + 1})")
        seen.add(h)
    body = rows[1:]
    while body and not any(c.strip() for c in body[-1]):
        body.pop()
    if not body:
        raise DataError(f"{path}: no data rows")
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(r)} cells, "
                            f"expected {len(header)}")
        for j, c in enumerate(r):
            if c.strip() == "":
                raise DataError(f"{path}: missing value at row {i + 2}, "
                                f"column {header[j]!r}")
    return header, body


def _parse_label(cell: str, where: str, allow_prob: bool) -> int:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"unparsable label {cell!r} at {where}") from None
    if v in (1.0, -1.0):
        return int(v)
    if v == 0.0:
        return -1
    if allow_prob and 0.0 <= v <= 1.0:
        return 1 if v >= 0.5 else -1
    raise DataError(f"label {cell!r} at {where} is not in {{-1,+1}} or {{0,1}}")


def _column_index(path, header, name) -> int:
    try:
        return header.index(name)
    except ValueError:
        raise DataError(f"{path}: missing column {name!r}") from None


def _parse_label_column(path, header, body, name, allow_prob) -> np.ndarray:
    j = _column_index(path, header, name)
    return np.array([_parse_label(r[j].strip(), f"{path} row {i + 2} column {name!r}",
                                  allow_prob)
                     for i, r in enumerate(body)], dtype=np.int8)


def _feature_columns(header, body, skip) -> dict:
    return {h: [r[j].strip() for r in body]
            for j, h in enumerate(header) if h not in skip}


def load_dataset(path, label_column: str = "label",
                 blackbox_column: str = "blackbox") -> Dataset:
    """Read a comma-separated file with a header row.

    Labels may be coded as {-1, +1} or {0, 1}; the black-box column may also
    hold probabilities, which are thresholded at 0.5.
    """
    header, body = _read_csv(path)
    y = _parse_label_column(path, header, body, label_column, allow_prob=False)
    yb = _parse_label_column(path, header, body, blackbox_column, allow_prob=True)
    feats = _feature_columns(header, body, {label_column, blackbox_column})
    return make_dataset(feats, y, yb)


def load_table(path, blackbox_column: str = "blackbox",
               ignore: Sequence[str] = ()) -> tuple[FeatureTable, np.ndarray]:
    """Read features and black-box labels only (for prediction)."""
    header, body = _read_csv(path)
    yb = _parse_label_column(path, header, body, blackbox_column, allow_prob=True)
    feats = _feature_columns(header, body, {blackbox_column, *ignore})
    names, cols, kinds = [], [], []
    for name, values in feats.items():
        kind, col = _infer_column(values)
        names.append(name)
        cols.append(col)
        kinds.append(kind)
    return FeatureTable(tuple(names), tuple(cols), tuple(kinds)), yb


def _format_cell(v, kind: str) -> str:
    return repr(float(v)) if kind == NUMERIC else str(v)


def write_dataset(d: Dataset, path, label_column: str = "label",
                  blackbox_column: str = "blackbox") -> None:
    """Write ``d`` in the canonical CSV layout read by :func:`load_dataset`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.feature_names, label_column, blackbox_column])
        for i in range(d.n):
            w.writerow([*(_format_cell(c[i], k) for c, k in zip(d.columns, d.kinds)),
                        int(d.labels[i]), int(d.blackbox_labels[i])])


# ---------------------------------------------------------------------------
# Binarization


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """Bit matrix over condition descriptors; one column per condition."""

    conditions: tuple  # of rules.Condition
    bits: np.ndarray
    labels: np.ndarray
    blackbox_labels: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[1] != len(self.conditions):
            raise DataError("bit matrix must have one column per condition")
        y = np.asarray(self.labels, dtype=np.int8)
        yb = np.asarray(self.blackbox_labels, dtype=np.int8)
        if len(y) < 1 or len(y) != bits.shape[0] or len(yb) != len(y):
            raise DataError("labels and bit rows differ in length")
        for v in (y, yb):
            if not np.all((v == 1) | (v == -1)):
                raise DataError("labels must be in {-1, +1}")
        object.__setattr__(self, "bits", _frozen(bits))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "blackbox_labels", _frozen(yb))
        object.__setattr__(self, "_index",
                           {c: j for j, c in enumerate(self.conditions)})

    @property
    def n(self) -> int:
        return len(self.labels)

    def condition_index(self, cond) -> int:
        try:
            return self._index[cond]
        except KeyError:
            raise KeyError(f"unknown condition {cond}") from None

    def condition_bits(self, cond) -> np.ndarray:
        return self.bits[:, self.condition_index(cond)]


def binarize(d: Dataset, quantiles: Sequence[float] = DEFAULT_QUANTILES) -> BinaryDataset:
    """Turn every feature into condition bits.

    Categorical features produce ``f == v`` for each observed value followed
    by ``f != v`` for each value. Numeric features produce ``f <= q`` and
    ``f > q`` at each empirical quantile ``q`` (linear interpolation);
    thresholds that would give a constant condition are skipped, so constant
    features contribute nothing.
    """
    from .rules import Condition

    qs = [float(q) for q in quantiles]
    if any(not 0.0 < q < 1.0 for q in qs):
        raise DataError("quantiles must lie in (0, 1)")
    if any(b <= a for a, b in zip(qs, qs[1:])):
        raise DataError("quantiles must be sorted and distinct")

    conds, cols = [], []
    for name, col, kind in zip(d.feature_names, d.columns, d.kinds):
        if kind == CATEGORICAL:
            values = sorted(set(col.tolist()))
            if len(values) < 2:
                continue
            for v in values:
                conds.append(Condition(name, "==", v))
                cols.append(col == v)
            for v in values:
                conds.append(Condition(name, "!=", v))
                cols.append(col != v)
        else:
            lo, hi = float(col.min()), float(col.max())
            if lo == hi:
                continue
            thresholds = []
            for t in np.quantile(col, qs):
                t = float(t)
                if lo <= t < hi and t not in thresholds:
                    thresholds.append(t)
            for t in thresholds:
                conds.append(Condition(name, "<=", t))
                cols.append(col <= t)
                conds.append(Condition(name, ">", t))
                cols.append(col > t)
    if not conds:
        raise DataError("binarization produced no conditions")
    bits = np.column_stack(cols).astype(bool)
    return BinaryDataset(tuple(conds), bits, d.labels, d.blackbox_labels)


# ---------------------------------------------------------------------------
# Splitting


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")


def split(d: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Seeded random partition into (train, test); each side keeps file order."""
    n_train = math.floor(d.n * spec.train_fraction)
    if n_train < 1 or n_train > d.n - 1:
        raise DataError(f"train fraction {spec.train_fraction} leaves an empty "
                        f"side for n={d.n}")
    perm = np.random.default_rng(spec.seed).permutation(d.n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return d.take(train_idx), d.take(test_idx)
