"""Dataset ingestion, preprocessing and the two-Gaussian synthetic generator."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dpmult.datamodel import Dataset, Transform
from dpmult.numerics import SeededRng

logger = logging.getLogger(__name__)

MISSING = frozenset({"", "?", "NA", "NaN", "nan"})


class DataWarning(UserWarning):
    pass


def _default_cov0():
    return ((1.0, 0.5), (0.5, 1.0))


def _default_cov1():
    return ((1.0, 0.1), (0.1, 1.0))


@dataclass(frozen=True)
class SyntheticSpec:
    """Two classes with Gaussian class-conditionals; defaults are the standard benchmark setup."""

    mu0: tuple[float, float] = (1.0, 1.0)
    mu1: tuple[float, float] = (-1.0, -1.0)
    sigma0: tuple[tuple[float, float], ...] = field(default_factory=_default_cov0)
    sigma1: tuple[tuple[float, float], ...] = field(default_factory=_default_cov1)
    n_per_class_train: int = 1000
    n_test: int = 20_000
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma0", "sigma1"):
            s = np.asarray(getattr(self, name), dtype=np.float64)
            if s.shape != (2, 2):
                raise ValueError(f"{name} must be 2x2")
            if not np.allclose(s, s.T):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.det(s) <= 0 or s[0, 0] <= 0:
                raise ValueError(f"{name} is not positive definite")
        if self.n_per_class_train < 1 or self.n_test < 1:
            raise ValueError("sample sizes must be positive")


def _mvn(rng: SeededRng, mean, cov, n: int) -> np.ndarray:
    chol = np.linalg.cholesky(np.asarray(cov, dtype=np.float64))
    z = rng.standard_normal(2 * n).reshape(n, 2)
    return np.asarray(mean, dtype=np.float64) + z @ chol.T


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> tuple[Dataset, Dataset]:
    """Balanced training set and a test set drawn from the 50/50 mixture.

    Class 0 is centred on ``mu0``, class 1 on ``mu1``. Train rows are ordered
    class 0 first, then class 1.
    """
    names = ("x1", "x2")
    train_rng = SeededRng(spec.seed, 0)
    n = spec.n_per_class_train
    x0 = _mvn(train_rng, spec.mu0, spec.sigma0, n)
    x1 = _mvn(train_rng, spec.mu1, spec.sigma1, n)
    train = Dataset(np.vstack([x0, x1]), np.r_[np.zeros(n), np.ones(n)], names)

    test_rng = SeededRng(spec.seed, 1)
    y = (test_rng.uniform(spec.n_test) < 0.5).astype(np.int8)
    n1 = int(y.sum())
    xt = np.empty((spec.n_test, 2))
    xt[y == 0] = _mvn(test_rng, spec.mu0, spec.sigma0, spec.n_test - n1)
    xt[y == 1] = _mvn(test_rng, spec.mu1, spec.sigma1, n1)
    return train, Dataset(xt, y, names)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(
    path,
    label_column: str,
    group_column: str | None = None,
    positive_label: str | None = None,
) -> Dataset:
    """Read a headed, comma-separated file into a :class:`Dataset`.

    Numeric columns are parsed as floats. Other feature columns are one-hot
    encoded, one indicator per distinct value in sorted order, named
    ``column=value``. Rows with any missing cell are dropped, with one
    :class:`DataWarning` reporting the count.

    Labels equal to ``positive_label`` become 1 and all others 0. Without a
    positive label the column must already hold only 0 and 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [[c.strip() for c in r] for r in reader if r]

    if label_column not in header:
        raise ValueError(f"{path}: missing label column {label_column!r}")
    if group_column is not None and group_column not in header:
        raise ValueError(f"{path}: missing group column {group_column!r}")

    kept = [r for r in rows if len(r) == len(header) and not any(c in MISSING for c in r)]
    dropped = len(rows) - len(kept)
    if dropped:
        msg = f"dropped {dropped} row(s) with missing values from {path.name}"
        logger.warning(msg)
        warnings.warn(msg, DataWarning, stacklevel=2)
    if not kept:
        raise ValueError(f"{path}: zero usable rows")

    li = header.index(label_column)
    raw_labels = [r[li] for r in kept]
    if positive_label is not None:
        labels = np.array([lab == positive_label for lab in raw_labels], dtype=np.int8)
    else:
        try:
            vals = np.array([float(lab) for lab in raw_labels])
        except ValueError:
            raise ValueError(f"{path}: non-binary labels; pass a positive label") from None
        if not np.isin(vals, (0.0, 1.0)).all():
            raise ValueError(f"{path}: non-binary labels {sorted(set(raw_labels))[:5]}")
        labels = vals.astype(np.int8)

    gi = header.index(group_column) if group_column is not None else None
    columns, names = [], []
    for j, col in enumerate(header):
        if j == li or j == gi:
            continue
        cells = [r[j] for r in kept]
        if all(_is_float(c) for c in cells):
            columns.append(np.array([float(c) for c in cells]))
            names.append(col)
        else:
            for value in sorted(set(cells)):
                columns.append(np.array([c == value for c in cells], dtype=np.float64))
                names.append(f"{col}={value}")
    if not columns:
        raise ValueError(f"{path}: no feature columns")

    group = tuple(r[gi] for r in kept) if gi is not None else None
    return Dataset(np.column_stack(columns), labels, tuple(names), group)


def save_csv(data: Dataset, path, label_column: str = "label", group_column: str = "group") -> None:
    """Write ``data`` in the dialect :func:`load_csv` reads; floats round-trip exactly."""
    header = list(data.feature_names) + [label_column]
    if data.group is not None:
        header.append(group_column)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.features[i]] + [str(int(data.labels[i]))]
            if data.group is not None:
                row.append(data.group[i])
            w.writerow(row)


def train_test_split(data: Dataset, train_frac: float = 0.75, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random split; the train part holds round(train_frac * n) rows."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie in (0, 1)")
    rng = SeededRng(seed, 0)
    order = np.argsort(rng.uniform(data.n), kind="stable")
    n_train = min(max(1, round(train_frac * data.n)), data.n - 1)
    return data.subset(np.sort(order[:n_train])), data.subset(np.sort(order[n_train:]))


def fit_transform(train: Dataset, intercept: bool = True) -> Transform:
    x = train.features
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    flat = std == 0
    if flat.any():
        cols = [train.feature_names[i] for i in np.flatnonzero(flat)]
        msg = f"zero-variance feature(s) {cols}; using std 1"
        logger.warning(msg)
        warnings.warn(msg, DataWarning, stacklevel=3)
        std = np.where(flat, 1.0, std)
    z = (x - mean) / std
    if intercept:
        z = np.hstack([z, np.ones((z.shape[0], 1))])
    divisor = float(np.linalg.norm(z, axis=1).max())
    if divisor == 0.0 or not math.isfinite(divisor):
        divisor = 1.0
    mean.flags.writeable = False
    std.flags.writeable = False
    return Transform(mean=mean, std=std, norm_divisor=divisor, intercept=intercept)


def apply_transform(t: Transform, data: Dataset) -> Dataset:
    names = data.feature_names + (("intercept",) if t.intercept else ())
    return Dataset(t.apply(data.features), data.labels, names, data.group, t)


def preprocess(train: Dataset, test: Dataset, intercept: bool = True) -> tuple[Dataset, Dataset, Transform]:
    """Standardize with train statistics, optionally append an intercept column,
    then divide every row by the largest train-row norm.

    Train rows end up with norm <= 1. Test rows get the same transform and may
    exceed 1.
    """
    if test.d != train.d:
        raise ValueError("train and test have different feature counts")
    t = fit_transform(train, intercept)
    return apply_transform(t, train), apply_transform(t, test), t
