"""Classification metrics and summaries of per-example multiplicity values."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from dpmult.numerics import percentile

Z95 = 1.96


@dataclass(frozen=True)
class PerformanceSummary:
    metric_name: str
    mean: float
    std: float
    per_model: tuple[float, ...]

    @classmethod
    def from_values(cls, name: str, values: Sequence[float]) -> "PerformanceSummary":
        v = np.asarray(values, dtype=np.float64)
        return cls(name, float(v.mean()), float(v.std()), tuple(float(a) for a in v))

    @property
    def ci95_half_width(self) -> float:
        return Z95 * self.std / math.sqrt(len(self.per_model))

    def to_dict(self):
        d = asdict(self)
        d["per_model"] = list(self.per_model)
        d["ci95_half_width"] = self.ci95_half_width
        return d


@dataclass(frozen=True)
class DisagreementSummary:
    mean: float
    std: float
    min: float
    median: float
    max: float
    p90: float
    p95: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class GroupDisparity:
    group_label: str
    mean_disagreement: float
    ci95_half_width: float
    count: int

    def to_dict(self):
        return asdict(self)


def _pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """ROC AUC as the Mann-Whitney statistic; tied scores count one half."""
    s, y = _pair(scores, labels)
    y = y.astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: labels contain a single class")
    ranks = rankdata(s)  # midranks on ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    p, y = _pair(predictions, labels)
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.mean(p == y))


def f1(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """F1 score of the positive class; 0 when precision + recall is 0."""
    p, y = _pair(predictions, labels)
    p = p.astype(bool)
    y = y.astype(bool)
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    fn = int(np.sum(~p & y))
    # 2PR/(P+R) == 2tp/(2tp+fp+fn), and P+R=0 iff tp=0
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def disagreement_summary(values: Sequence[float]) -> DisagreementSummary:
    """Mean, population std and nearest-rank order statistics."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty sample")
    return DisagreementSummary(
        mean=float(v.mean()),
        std=float(v.std()),
        min=float(v.min()),
        median=percentile(v, 50),
        max=float(v.max()),
        p90=percentile(v, 90),
        p95=percentile(v, 95),
    )


def group_disparities(disagreements: Sequence[float], groups: Sequence[str]) -> list[GroupDisparity]:
    """Per-group mean disagreement with a normal-approximation 95% CI.

    Groups are returned sorted by label. A singleton group has CI half-width 0.
    """
    values = np.asarray(disagreements, dtype=np.float64)
    labels = np.asarray([str(g) for g in groups], dtype=object)
    if values.shape != labels.shape:
        raise ValueError(f"length mismatch: {values.shape} vs {labels.shape}")
    out = []
    for g in sorted(set(labels.tolist())):
        vals = values[labels == g]
        out.append(
            GroupDisparity(
                group_label=g,
                mean_disagreement=float(vals.mean()),
                ci95_half_width=float(Z95 * vals.std() / math.sqrt(vals.size)),
                count=int(vals.size),
            )
        )
    return out
