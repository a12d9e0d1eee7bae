"""Core domain types: datasets, parameter vectors, privacy settings, ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from dpmult.numerics import sigmoid

#: decision threshold on the confidence score; compared strictly
THRESHOLD = 0.5


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Transform:
    """Preprocessing applied to produce a dataset: standardize, add intercept, rescale.

    ``apply`` maps raw feature rows (without intercept) to model inputs.
    """

    mean: np.ndarray
    std: np.ndarray
    norm_divisor: float
    intercept: bool

    def apply(self, features: np.ndarray) -> np.ndarray:
        z = (np.asarray(features, dtype=np.float64) - self.mean) / self.std
        if self.intercept:
            z = np.hstack([z, np.ones((z.shape[0], 1))])
        return z / self.norm_divisor

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "norm_divisor": self.norm_divisor,
            "intercept": self.intercept,
        }


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, binary labels and an optional categorical group column."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()
    group: tuple[str, ...] | None = None
    preprocessing: Transform | None = None

    def __post_init__(self):
        x = _frozen(self.features)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"features must be a non-empty n x d matrix, got shape {x.shape}")
        y = _frozen(self.labels, dtype=np.int8)
        if y.shape != (x.shape[0],):
            raise ValueError("labels length must equal the number of rows")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ValueError("feature_names length must equal the number of columns")
        group = None if self.group is None else tuple(str(g) for g in self.group)
        if group is not None and len(group) != x.shape[0]:
            raise ValueError("group length must equal the number of rows")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "group", group)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, idx: Sequence[int]) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.feature_names,
            None if self.group is None else tuple(self.group[i] for i in idx),
            self.preprocessing,
        )

    def max_row_norm(self) -> float:
        return float(np.linalg.norm(self.features, axis=1).max())


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Weights of a linear scoring model; the last entry is the intercept when one is used."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty vector")
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        return isinstance(other, ParamVector) and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0
    sensitivity_C: float = 1.0
    lambda_reg: float = 0.1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if not self.sensitivity_C > 0:
            raise ValueError("sensitivity_C must be positive")
        if not self.lambda_reg > 0:
            raise ValueError("lambda_reg must be positive")


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Models drawn from one randomized training procedure, with their stream indices."""

    models: tuple[ParamVector, ...]
    seeds: tuple[int, ...]
    train_config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        models = tuple(self.models)
        seeds = tuple(int(s) for s in self.seeds)
        if not models:
            raise ValueError("ensemble is empty")
        if len(seeds) != len(models):
            raise ValueError("need one seed per model")
        dims = {m.dim for m in models}
        if len(dims) != 1:
            raise ValueError(f"models have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "seeds", seeds)

    @property
    def m(self) -> int:
        return len(self.models)

    @property
    def dim(self) -> int:
        return self.models[0].dim

    def weight_matrix(self) -> np.ndarray:
        """m x d matrix of stacked weights."""
        return np.stack([p.weights for p in self.models])


def _weights(theta) -> np.ndarray:
    return theta.weights if isinstance(theta, ParamVector) else np.asarray(theta, dtype=np.float64)


def score(theta, x) -> float:
    w = _weights(theta)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[-1]:
        raise ValueError(f"dimension mismatch: theta has {w.shape[-1]}, x has {x.shape[-1]}")
    return x @ w


def predict(theta, x) -> int:
    """Thresholded decision: 1 iff theta.x > 0 (confidence strictly above 0.5)."""
    return int(score(theta, x) > 0.0)


def confidence(theta, x) -> float:
    """Confidence score sigmoid(theta.x)."""
    return sigmoid(score(theta, x))
