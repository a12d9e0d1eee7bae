"""L2-regularized logistic regression, plain and differentially private.

Two private mechanisms are provided:

* output perturbation: train non-privately, then add N(0, sigma^2 I) to the
  weights, with sigma calibrated from the sensitivity 2/(n*lambda);
* objective perturbation: add a random linear term b.theta/n (and, when the
  budget requires it, extra ridge regularization) to the objective before
  minimizing. Gives (epsilon, 0)-DP.

Both assume every training row has l2 norm at most 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from dpmult.datamodel import Dataset, ParamVector, PrivacyParams
from dpmult.numerics import SeededRng, sample_gamma, sample_gaussian_vector

#: smoothness constant of the logistic loss (|l''| <= 1/4)
LOGISTIC_SMOOTHNESS = 0.25


class ConvergenceError(RuntimeError):
    """Optimizer stopped at max_iters with the gradient norm still above tolerance."""

    def __init__(self, message: str, grad_norm: float):
        super().__init__(message)
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 10_000
    grad_tol: float = 1e-8
    lambda_reg: float = 0.1
    intercept: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be non-negative")

    def to_dict(self):
        return asdict(self)


def _signed(labels: np.ndarray) -> np.ndarray:
    return 2.0 * labels.astype(np.float64) - 1.0


def regularized_loss(theta, X, y_signed, lam, linear=None) -> float:
    """(1/n) sum log(1+exp(-y x.theta)) + lam/2 |theta|^2 + linear.theta/n."""
    z = y_signed * (X @ theta)
    val = np.logaddexp(0.0, -z).mean() + 0.5 * lam * theta @ theta
    if linear is not None:
        val += linear @ theta / X.shape[0]
    return float(val)


def regularized_grad(theta, X, y_signed, lam, linear=None) -> np.ndarray:
    n = X.shape[0]
    z = y_signed * (X @ theta)
    # d/dz log(1+e^{-z}) = -sigmoid(-z) = -1/(1+e^{z})
    coef = -y_signed * np.exp(-np.logaddexp(0.0, z))
    g = X.T @ coef / n + lam * theta
    if linear is not None:
        g = g + linear / n
    return g


def minimize_logistic(X, y_signed, lam, linear=None, cfg: TrainConfig = TrainConfig()) -> np.ndarray:
    """Full-batch gradient descent with Armijo backtracking.

    The search starts from twice the last accepted step and halves until the
    sufficient-decrease test passes, but never goes below 1/L (L the gradient
    Lipschitz bound), where descent is guaranteed; that floor keeps the
    iteration moving once loss differences drop below float resolution.
    """
    n, d = X.shape
    L = LOGISTIC_SMOOTHNESS * float(np.einsum("ij,ij->i", X, X).max()) + lam
    safe = 1.0 / L
    theta = np.zeros(d)
    f = regularized_loss(theta, X, y_signed, lam, linear)
    g = regularized_grad(theta, X, y_signed, lam, linear)
    step = safe
    gnorm = float(np.linalg.norm(g))
    for _ in range(cfg.max_iters):
        if gnorm <= cfg.grad_tol:
            return theta
        gg = gnorm * gnorm
        t = 2.0 * step
        while True:
            cand = theta - t * g
            f_cand = regularized_loss(cand, X, y_signed, lam, linear)
            if f_cand <= f - 1e-4 * t * gg or t <= safe:
                break
            t = max(0.5 * t, safe)
        theta, f, step = cand, f_cand, t
        g = regularized_grad(theta, X, y_signed, lam, linear)
        gnorm = float(np.linalg.norm(g))
        if not math.isfinite(gnorm):
            raise ConvergenceError("gradient became non-finite", gnorm)
    if gnorm <= cfg.grad_tol:
        return theta
    raise ConvergenceError(
        f"no convergence in {cfg.max_iters} iterations (gradient norm {gnorm:.3e})", gnorm
    )


def _check_inputs(data: Dataset, cfg: TrainConfig):
    if data.preprocessing is not None and data.preprocessing.intercept != cfg.intercept:
        raise ValueError("cfg.intercept does not match the dataset's preprocessing")
    if cfg.lambda_reg == 0 and len(np.unique(data.labels)) < 2:
        raise ValueError("unbounded objective: single-class data with lambda_reg = 0")


def train_logreg_nonprivate(data: Dataset, cfg: TrainConfig = TrainConfig()) -> ParamVector:
    """Deterministic minimizer of the L2-regularized logistic loss."""
    _check_inputs(data, cfg)
    theta = minimize_logistic(data.features, _signed(data.labels), cfg.lambda_reg, cfg=cfg)
    return ParamVector(theta)


def lr_sensitivity(n: int, lambda_reg: float) -> float:
    """l2 sensitivity of regularized logistic regression on rows with |x| <= 1."""
    if n < 1 or not lambda_reg > 0:
        raise ValueError("need n >= 1 and lambda_reg > 0")
    return 2.0 / (n * lambda_reg)


def noise_scale_for(pp: PrivacyParams) -> float:
    """Gaussian-mechanism scale sigma = C * sqrt(2 log(1.25/delta)) / epsilon."""
    if pp.delta <= 0:
        raise ValueError("Gaussian mechanism requires δ > 0")
    return pp.sensitivity_C * math.sqrt(2.0 * math.log(1.25 / pp.delta)) / pp.epsilon


def output_perturb(theta_np: ParamVector, sigma: float, rng: SeededRng) -> ParamVector:
    return ParamVector(theta_np.weights + sample_gaussian_vector(rng, theta_np.dim, sigma))


def objective_perturbation_terms(n: int, d: int, epsilon: float, lambda_reg: float, rng: SeededRng):
    """Draw the random linear term ``b`` and the extra ridge ``delta_reg``.

    Returns ``(b, delta_reg, epsilon_prime)``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not lambda_reg > 0:
        raise ValueError("objective perturbation needs lambda_reg > 0")
    c = LOGISTIC_SMOOTHNESS
    ratio = c / (n * lambda_reg)
    eps_p = epsilon - math.log(1.0 + 2.0 * ratio + ratio * ratio)
    if eps_p > 0:
        delta_reg = 0.0
    else:
        delta_reg = c / (n * math.expm1(epsilon / 4.0)) - lambda_reg
        eps_p = epsilon / 2.0
    norm = sample_gamma(rng, float(d), 2.0 / eps_p)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    return norm * direction, delta_reg, eps_p


def objective_perturb_train(
    data: Dataset, epsilon: float, cfg: TrainConfig, rng: SeededRng
) -> ParamVector:
    """(epsilon, 0)-DP logistic regression by objective perturbation."""
    _check_inputs(data, cfg)
    b, delta_reg, _ = objective_perturbation_terms(data.n, data.d, epsilon, cfg.lambda_reg, rng)
    theta = minimize_logistic(
        data.features, _signed(data.labels), cfg.lambda_reg + delta_reg, linear=b, cfg=cfg
    )
    return ParamVector(theta)
