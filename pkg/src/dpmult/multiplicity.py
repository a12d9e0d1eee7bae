"""Disagreement between models drawn from one randomized training procedure.

For binary decisions with positive rate ``p`` at an input, the population
disagreement (twice the chance that two independent models differ) is
``4 p (1 - p)``. From ``m`` sampled models the Bessel-corrected plug-in
``4 m/(m-1) p_hat (1 - p_hat)`` is unbiased, and Hoeffding's inequality on
``p_hat`` gives the finite-sample error bounds below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dpmult.datamodel import Ensemble
from dpmult.numerics import std_normal_cdf

#: ensembles smaller than this get ``low_m`` set on their estimates
LOW_M = 30


@dataclass(frozen=True)
class DisagreementEstimate:
    mu_hat: float
    p_hat: float
    m: int

    @property
    def display(self) -> float:
        """mu_hat clamped to 1 for presentation; the raw value stays unbiased."""
        return min(self.mu_hat, 1.0)

    @property
    def low_m(self) -> bool:
        return self.m < LOW_M


@dataclass(frozen=True)
class BoundReport:
    m: int
    rho: float
    k: int
    alpha_bound: float


def population_disagreement(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return 4.0 * p * (1.0 - p)


def disagreement_from_counts(ones, m: int):
    """Unbiased disagreement from the number of positive votes among ``m`` models.

    Equals ``4 k (m - k) / (m (m - 1))``; vectorized over ``ones``.
    """
    if m < 2:
        raise ValueError("need at least two models")
    k = np.asarray(ones, dtype=np.float64)
    return 4.0 * k * (m - k) / (m * (m - 1.0))


def estimate_disagreement(predictions: Sequence[int]) -> DisagreementEstimate:
    preds = np.asarray(predictions)
    m = preds.size
    if m < 2:
        raise ValueError("need at least two models")
    k = int(np.count_nonzero(preds))
    # 4 (m/(m-1)) p(1-p) == 4k(m-k) / (m(m-1)); one integer division rounds once
    return DisagreementEstimate(mu_hat=4 * k * (m - k) / (m * (m - 1)), p_hat=k / m, m=m)


def closed_form_disagreement(theta_np, x, sigma: float) -> float:
    """Exact disagreement at ``x`` when theta_np is perturbed by N(0, sigma^2 I).

    The perturbed score is theta_np.x + |x| sigma xi with xi standard normal,
    so the positive rate is Phi(theta_np.x / (|x| sigma)).
    """
    w = getattr(theta_np, "weights", theta_np)
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != w.shape:
        raise ValueError("dimension mismatch")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    xnorm = float(np.linalg.norm(x))
    if xnorm == 0.0:
        raise ValueError("undefined direction: x is the zero vector")
    p = std_normal_cdf(float(w @ x) / (xnorm * sigma))
    return 4.0 * p * (1.0 - p)


def closed_form_from_score(score: float, sigma: float, x_norm: float = 1.0) -> float:
    """Same as :func:`closed_form_disagreement` given only theta.x and |x|."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not x_norm > 0:
        raise ValueError("undefined direction: x is the zero vector")
    p = std_normal_cdf(score / (x_norm * sigma))
    return 4.0 * p * (1.0 - p)


def _eta(m: int, log_term: float) -> float:
    return math.sqrt(log_term / (2.0 * m))


def multi_error_bound(m: int, k: int, rho: float) -> float:
    """Error bound holding simultaneously over ``k`` inputs with prob. >= 1 - rho."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    eta = _eta(m, math.log(2.0 * k / rho))
    return 1.0 / (m - 1) + 4.0 * (m / (m - 1)) * eta * (1.0 + eta)


def error_bound(m: int, rho: float) -> float:
    """With prob. >= 1 - rho, |mu_hat - mu| is at most this for one input."""
    return multi_error_bound(m, 1, rho)


def required_samples(alpha: float, rho: float) -> int:
    """Number of models sufficient for ``error_bound(m, rho) <= alpha``.

    Ceiling of the closed-form solution; an upper bound on the minimal m,
    which it matches or exceeds by a small margin.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    t = math.log(2.0 / rho)
    root = 2.0 * math.sqrt(2.0) * math.sqrt(t * (1.0 + alpha) * (2.0 * t + alpha))
    m = 1.0 + (alpha + 2.0 * t * (2.0 + alpha) + root) / alpha**2
    return max(2, math.ceil(m))


def minimal_samples(alpha: float, rho: float, k: int = 1) -> int:
    """Smallest m with ``multi_error_bound(m, k, rho) <= alpha`` (binary search).

    The bound is strictly decreasing in m and tends to 0, so the search is exact.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    hi = 2
    while multi_error_bound(hi, k, rho) > alpha:
        hi *= 2
    lo = max(2, hi // 2)
    if multi_error_bound(lo, k, rho) <= alpha:
        return lo
    # invariant: bound(lo) > alpha >= bound(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if multi_error_bound(mid, k, rho) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi


def bound_report(m: int, rho: float, k: int = 1) -> BoundReport:
    return BoundReport(m=m, rho=rho, k=k, alpha_bound=multi_error_bound(m, k, rho))


def viable_prediction_range(scores: Sequence[float]) -> float:
    """Spread (max - min) of the ensemble's confidence scores at one input."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty score list")
    return float(s.max() - s.min())


def ensemble_disagreement(ensemble: Ensemble, x) -> DisagreementEstimate:
    """Disagreement of the ensemble's thresholded predictions at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (ensemble.dim,):
        raise ValueError(f"dimension mismatch: models have {ensemble.dim}, x has {x.shape}")
    # same strict threshold as datamodel.predict, applied to all models at once
    return estimate_disagreement(ensemble.weight_matrix() @ x > 0.0)
