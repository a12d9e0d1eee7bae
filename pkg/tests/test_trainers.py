import math

import numpy as np
import pytest

from dpmult.datamodel import Dataset, ParamVector, PrivacyParams
from dpmult.metrics import accuracy
from dpmult.numerics import SeededRng
from dpmult.trainers import (
    ConvergenceError,
    TrainConfig,
    lr_sensitivity,
    minimize_logistic,
    noise_scale_for,
    objective_perturb_train,
    objective_perturbation_terms,
    output_perturb,
    regularized_grad,
    regularized_loss,
    train_logreg_nonprivate,
)

NO_INTERCEPT = TrainConfig(intercept=False)


def _problem(seed=0, n=200, d=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    X /= np.linalg.norm(X, axis=1).max()
    y = (X @ rng.normal(size=d) + 0.1 * rng.normal(size=n) > 0).astype(int)
    return Dataset(X, y)


def test_separable_1d_positive_weight():
    ds = Dataset([[0.9], [-0.9]], [1, 0])
    theta = train_logreg_nonprivate(ds, TrainConfig(lambda_reg=0.1, intercept=False))
    assert theta.weights[0] > 0


def test_gradient_matches_finite_differences():
    ds = _problem()
    y = 2.0 * ds.labels - 1.0
    rng = np.random.default_rng(1)
    b = rng.normal(size=ds.d)
    h = 1e-6
    for _ in range(20):
        theta = rng.normal(size=ds.d)
        g = regularized_grad(theta, ds.features, y, 0.1, b)
        fd = np.array([
            (regularized_loss(theta + h * e, ds.features, y, 0.1, b)
             - regularized_loss(theta - h * e, ds.features, y, 0.1, b)) / (2 * h)
            for e in np.eye(ds.d)
        ])
        assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_nonprivate_is_local_optimum():
    ds = _problem()
    y = 2.0 * ds.labels - 1.0
    theta = train_logreg_nonprivate(ds, NO_INTERCEPT).weights
    f0 = regularized_loss(theta, ds.features, y, 0.1)
    rng = np.random.default_rng(2)
    for _ in range(100):
        u = rng.normal(size=ds.d)
        u *= 1e-2 / np.linalg.norm(u)
        assert f0 <= regularized_loss(theta + u, ds.features, y, 0.1)
    assert np.linalg.norm(regularized_grad(theta, ds.features, y, 0.1)) <= 1e-8


def test_objective_is_convex():
    ds = _problem(3)
    y = 2.0 * ds.labels - 1.0
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = rng.normal(scale=3, size=(2, ds.d))
        t = rng.uniform()
        lhs = regularized_loss(t * a + (1 - t) * b, ds.features, y, 0.1)
        rhs = t * regularized_loss(a, ds.features, y, 0.1) + (1 - t) * regularized_loss(b, ds.features, y, 0.1)
        assert lhs <= rhs + 1e-10


def test_single_class_without_regularization_is_unbounded():
    ds = Dataset([[0.5], [0.2]], [1, 1])
    with pytest.raises(ValueError, match="unbounded objective"):
        train_logreg_nonprivate(ds, TrainConfig(lambda_reg=0.0, intercept=False))


def test_non_convergence_reports_gradient_norm():
    ds = _problem()
    with pytest.raises(ConvergenceError) as info:
        train_logreg_nonprivate(ds, TrainConfig(max_iters=2, intercept=False))
    assert info.value.grad_norm > 1e-8


def test_intercept_flag_must_match_preprocessing(small_synthetic):
    train, _ = small_synthetic
    with pytest.raises(ValueError, match="intercept"):
        train_logreg_nonprivate(train, NO_INTERCEPT)


def test_noise_scale_examples():
    pp = PrivacyParams(1.0, 1e-5, 0.2, 0.1)
    assert noise_scale_for(pp) == pytest.approx(0.968962, abs=1e-5)
    assert noise_scale_for(PrivacyParams(1.0, 1e-5, 0.4)) == pytest.approx(2 * noise_scale_for(pp), rel=1e-15)
    assert noise_scale_for(PrivacyParams(0.5, 1e-5, 0.2)) == pytest.approx(2 * noise_scale_for(pp), rel=1e-15)
    with pytest.raises(ValueError, match="δ > 0"):
        noise_scale_for(PrivacyParams(1.0, 0.0, 0.2))


def test_lr_sensitivity():
    assert lr_sensitivity(100, 0.1) == pytest.approx(0.2, rel=1e-15)
    assert lr_sensitivity(200, 0.1) == pytest.approx(0.1, rel=1e-15)
    assert lr_sensitivity(100, 0.2) == pytest.approx(0.1, rel=1e-15)


def test_output_perturb_vanishing_noise():
    theta = ParamVector([0.3, -1.2, 2.0])
    out = output_perturb(theta, 1e-12, SeededRng(1))
    assert np.linalg.norm(out.weights - theta.weights) <= 1e-10
    assert out.dim == theta.dim


def test_output_perturb_determinism():
    theta = ParamVector([0.3, -1.2])
    assert output_perturb(theta, 0.5, SeededRng(4, 2)) == output_perturb(theta, 0.5, SeededRng(4, 2))


def test_output_perturb_moments():
    theta = ParamVector([0.3, -1.2, 2.0])
    sigma = 0.7
    rng = SeededRng(10)
    draws = np.stack([output_perturb(theta, sigma, rng).weights for _ in range(10**5)])
    assert np.all(np.abs(draws.std(axis=0) / sigma - 1) < 0.02)
    assert np.all(np.abs(draws.mean(axis=0) - theta.weights) < 4 * sigma / math.sqrt(10**5))


def test_objective_perturbation_terms_branches():
    # ample budget: no extra regularization, epsilon' slightly below epsilon
    b, delta_reg, eps_p = objective_perturbation_terms(2000, 3, 1.0, 0.1, SeededRng(0))
    assert delta_reg == 0.0
    assert eps_p == pytest.approx(1.0 - math.log(1 + 2 * 0.25 / 200 + (0.25 / 200) ** 2))
    assert b.shape == (3,)
    # tiny n*lambda forces the extra ridge and halves epsilon
    _, delta_reg, eps_p = objective_perturbation_terms(10, 3, 0.5, 0.01, SeededRng(0))
    assert eps_p == 0.25
    assert delta_reg == pytest.approx(0.25 / (10 * math.expm1(0.125)) - 0.01)


def test_objective_perturbation_noise_norm_distribution():
    # |b| ~ Gamma(d, 2/eps'): mean 2d/eps'
    norms = []
    for j in range(20_000):
        b, _, eps_p = objective_perturbation_terms(2000, 3, 1.0, 0.1, SeededRng(1, j))
        norms.append(np.linalg.norm(b))
    assert np.mean(norms) == pytest.approx(2 * 3 / eps_p, rel=0.02)


def test_objective_perturb_huge_epsilon_matches_nonprivate(synthetic):
    train, _ = synthetic
    cfg = TrainConfig()
    a = objective_perturb_train(train, 1e6, cfg, SeededRng(1)).weights
    b = train_logreg_nonprivate(train, cfg).weights
    assert np.linalg.norm(a - b) <= 1e-3


def test_objective_perturb_accuracy_floor(synthetic):
    train, test = synthetic
    cfg = TrainConfig()
    for i, eps in enumerate((0.5, 1.0, 1.5, 2.0, 2.5)):
        for j in range(10):
            theta = objective_perturb_train(train, eps, cfg, SeededRng(99, (i << 32) + j))
            preds = (test.features @ theta.weights > 0).astype(int)
            assert accuracy(preds, test.labels) >= 0.70


def test_objective_perturb_variance_ordering(small_synthetic):
    train, _ = small_synthetic
    cfg = TrainConfig()

    def draws(eps):
        return np.stack([objective_perturb_train(train, eps, cfg, SeededRng(5, j)).weights for j in range(200)])

    assert np.all(draws(0.5).var(axis=0) > draws(2.5).var(axis=0))


def test_objective_perturb_bit_identical(small_synthetic):
    train, _ = small_synthetic
    a = objective_perturb_train(train, 1.0, TrainConfig(), SeededRng(3, 7))
    b = objective_perturb_train(train, 1.0, TrainConfig(), SeededRng(3, 7))
    assert a.weights.tobytes() == b.weights.tobytes()


def test_minimizer_reaches_tolerance_with_linear_term():
    ds = _problem(4)
    y = 2.0 * ds.labels - 1.0
    b = np.array([5.0, -3.0, 1.0, 0.5])
    theta = minimize_logistic(ds.features, y, 0.05, b)
    assert np.linalg.norm(regularized_grad(theta, ds.features, y, 0.05, b)) <= 1e-8
