import itertools

import numpy as np
import pytest

from dropescape.core_math import ConstraintSet, DropoutMask, SeededRng, sample_mask_matrix
from dropescape.dropout_sgd import (
    SgdConfig,
    dropout_risk_exact_ls,
    dropout_risk_exact_ls_grad,
    dropout_risk_mc,
    dropout_ridge_solution_ls,
    dropout_sgd_train,
    dropout_stochastic_gradient,
    empirical_hessian_min_eig_ls,
    erm_dropout_solve,
    expected_hessian_min_eig_ls,
    generalization_bound,
)
from dropescape.errors import ConvergenceError, DegenerateDataError, ParameterError
from dropescape.glm_core import Dataset, GlmLoss, dataset_delta1

SQUARED = GlmLoss("squared")


def _random_data(n, p, seed):
    gen = np.random.default_rng(seed)
    X = gen.uniform(-1, 1, (n, p))
    return Dataset(X, X @ gen.normal(size=p) + 0.1 * gen.normal(size=n))


def _mask_enumeration_risk(theta, d, alpha):
    total = 0.0
    for bits in itertools.product((0, 1), repeat=d.p):
        b = np.array(bits, dtype=float)
        weight = alpha ** b.sum() * (1 - alpha) ** (d.p - b.sum())
        u = (d.X * b) @ theta / alpha
        total += weight * float(((u - d.y) ** 2).mean())
    return total


def test_config_validation():
    with pytest.raises(ParameterError):
        SgdConfig(T=-1)
    with pytest.raises(ParameterError):
        SgdConfig(alpha=0.0)
    assert SgdConfig(seed=1).with_seed(7).seed == 7


def test_zero_steps_returns_initial_point():
    d = _random_data(10, 3, 0)
    theta0 = np.array([0.1, -0.2, 0.3])
    model = dropout_sgd_train(d, SQUARED, SgdConfig(T=0, theta0=theta0))
    np.testing.assert_array_equal(model.theta, theta0)
    assert model.trajectory == []


def test_single_step_by_hand():
    d = Dataset([[1.0]], [0.0])
    cfg = SgdConfig(T=1, alpha=1.0, constraint=ConstraintSet.l2_ball(1.0), theta0=np.array([1.0]))
    model = dropout_sgd_train(d, SQUARED, cfg)
    np.testing.assert_allclose(model.theta, [-1.0])


def test_default_rate_needs_positive_delta1():
    d = Dataset([[1.0, 0.0], [2.0, 0.0]], [0.0, 1.0])
    with pytest.raises(DegenerateDataError):
        dropout_sgd_train(d, SQUARED, SgdConfig(T=5))
    cfg = SgdConfig(T=5, learning_rate=lambda t: 0.1 / t)
    assert dropout_sgd_train(d, SQUARED, cfg).theta.shape == (2,)


def test_iterates_stay_feasible_and_reproducible():
    d = _random_data(30, 4, 1)
    cfg = SgdConfig(T=500, constraint=ConstraintSet.l2_ball(0.5), seed=3, log_every=100)
    a = dropout_sgd_train(d, SQUARED, cfg)
    b = dropout_sgd_train(d, SQUARED, cfg)
    assert np.linalg.norm(a.theta) <= 0.5 + 1e-9
    np.testing.assert_array_equal(a.theta, b.theta)
    assert [t for t, _ in a.trajectory] == [100, 200, 300, 400, 500]


def test_simplex_constrained_training():
    d = _random_data(30, 3, 2)
    model = dropout_sgd_train(d, SQUARED, SgdConfig(T=200, constraint=ConstraintSet.simplex()))
    assert ConstraintSet.simplex().contains(model.theta, tol=1e-9)


def test_logistic_training_logs_mc_risk():
    gen = np.random.default_rng(5)
    X = gen.normal(size=(40, 3)) / 3
    d = Dataset(X, np.where(X[:, 0] > 0, 1.0, -1.0))
    model = dropout_sgd_train(d, GlmLoss("logistic"), SgdConfig(T=200, log_every=100, risk_samples=16))
    assert len(model.trajectory) == 2
    assert all(r > 0 for _, r in model.trajectory)


def test_mean_update_direction_is_risk_gradient():
    d = _random_data(8, 3, 6)
    theta = np.array([0.4, -0.3, 0.2])
    alpha = 0.5
    gen = np.random.default_rng(0)
    draws = 10_000
    rows = gen.integers(0, d.n, size=draws)
    masks = sample_mask_matrix(draws, d.p, alpha, SeededRng(1))
    grads = np.array([
        dropout_stochastic_gradient(theta, d.X[i], d.y[i], b, SQUARED, alpha) for i, b in zip(rows, masks)
    ])
    se = grads.std(axis=0) / np.sqrt(draws)
    expected = dropout_risk_exact_ls_grad(theta, d, alpha)
    assert np.all(np.abs(grads.mean(axis=0) - expected) <= 4 * se)


def test_training_step_uses_the_stochastic_gradient():
    d = _random_data(12, 4, 7)
    theta0 = np.array([0.2, -0.1, 0.4, 0.0])
    cfg = SgdConfig(T=2, theta0=theta0, learning_rate=lambda t: 0.3 / t,
                    constraint=ConstraintSet.l2_ball(10.0), seed=21)
    rng = SeededRng(21)
    idx = rng.generator.integers(0, d.n, size=2)
    masks = sample_mask_matrix(2, d.p, cfg.alpha, rng)
    theta = theta0
    for t, (i, b) in enumerate(zip(idx, masks), start=1):
        step = dropout_stochastic_gradient(theta, d.X[i], d.y[i], b, SQUARED, cfg.alpha)
        theta = cfg.constraint.project(theta - (0.3 / t) * step)
    np.testing.assert_allclose(dropout_sgd_train(d, SQUARED, cfg).theta, theta, rtol=0, atol=1e-15)


def test_risk_mc_examples():
    d = Dataset([[1.0]], [0.0])
    theta = np.array([1.0])
    assert dropout_risk_mc(theta, d, SQUARED, 1.0, samples=3) == 1.0
    assert dropout_risk_mc(theta, d, SQUARED, 0.5, samples=100_000, seed=2) == pytest.approx(2.0, abs=0.05)
    d2 = _random_data(6, 2, 3)
    assert dropout_risk_mc(np.zeros(2), d2, SQUARED, 0.5, samples=5) == pytest.approx(float((d2.y ** 2).mean()))


def test_exact_ls_risk_examples():
    d = Dataset([[1.0]], [0.0])
    assert dropout_risk_exact_ls(np.array([1.0]), d) == 2.0
    d2 = _random_data(6, 3, 4)
    assert dropout_risk_exact_ls(np.zeros(3), d2) == pytest.approx(float((d2.y ** 2).mean()))


def test_exact_ls_risk_matches_enumeration():
    d = _random_data(12, 6, 8)
    theta = np.random.default_rng(9).normal(size=6)
    for alpha in (0.5, 0.8):
        assert dropout_risk_exact_ls(theta, d, alpha) == pytest.approx(_mask_enumeration_risk(theta, d, alpha), rel=1e-12)


def test_exact_ls_gradient_finite_difference():
    d = _random_data(10, 4, 10)
    theta = np.random.default_rng(11).normal(size=4)
    grad = dropout_risk_exact_ls_grad(theta, d, 0.6)
    h = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fd = (dropout_risk_exact_ls(theta + e, d, 0.6) - dropout_risk_exact_ls(theta - e, d, 0.6)) / (2 * h)
        assert fd == pytest.approx(grad[j], rel=1e-6, abs=1e-8)


def test_ridge_solution_is_stationary():
    d = _random_data(25, 4, 12)
    theta = dropout_ridge_solution_ls(d, 0.5)
    np.testing.assert_allclose(dropout_risk_exact_ls_grad(theta, d, 0.5), 0.0, atol=1e-10)


def test_erm_all_ones_masks_matches_least_squares():
    gen = np.random.default_rng(13)
    X = gen.normal(size=(5, 3)) / 2
    y = gen.normal(size=5)
    d = Dataset(X, y)
    masks = [DropoutMask.ones(3) for _ in range(5)]
    theta = erm_dropout_solve(d, masks, SQUARED, ConstraintSet.l2_ball(1e3), tol=1e-10)
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(2.0 * theta, ols, atol=1e-6)


def test_erm_single_equation():
    d = Dataset([[1.0]], [2.0])
    theta = erm_dropout_solve(d, [DropoutMask([1])], SQUARED, ConstraintSet.box(-10, 10))
    np.testing.assert_allclose(theta, [1.0], atol=1e-8)


def test_erm_all_zero_masks_returns_initial_point():
    d = _random_data(4, 2, 14)
    masks = np.zeros((4, 2), dtype=np.uint8)
    np.testing.assert_array_equal(erm_dropout_solve(d, masks, SQUARED, ConstraintSet.l2_ball(1.0)), np.zeros(2))


def test_erm_reports_residual_on_iteration_cap():
    d = _random_data(20, 3, 15)
    masks = np.ones((20, 3), dtype=np.uint8)
    with pytest.raises(ConvergenceError) as info:
        erm_dropout_solve(d, masks, SQUARED, ConstraintSet.l2_ball(100.0), tol=1e-14, max_iter=2)
    assert info.value.residual > 0


def test_hessian_examples():
    single = Dataset([[1.0, 0.0]], [0.0])
    assert expected_hessian_min_eig_ls(single) == pytest.approx(0.0, abs=1e-12)
    s = 1 / np.sqrt(2)
    parallel = Dataset([[s, s]] * 4, [0.0] * 4)
    assert expected_hessian_min_eig_ls(parallel) == pytest.approx(1.0)
    assert empirical_hessian_min_eig_ls(parallel) == pytest.approx(0.0, abs=1e-12)


def test_hessian_dominates_delta1():
    gen = np.random.default_rng(16)
    for _ in range(10):
        X = np.outer(gen.normal(size=6), gen.normal(size=3))
        d = Dataset(X, np.zeros(6))
        assert expected_hessian_min_eig_ls(d) >= 2 * dataset_delta1(d) - 1e-12


def test_generalization_bound():
    value = generalization_bound(G=1.0, B=1.0, Delta1=0.5, T=100, n=100)
    assert value == pytest.approx(2 * (np.log(100) / 50))
    assert generalization_bound(1.0, 1.0, 0.5, 1000, 100) < value
    with pytest.raises(ParameterError):
        generalization_bound(1.0, 1.0, 0.0, 100, 100)
