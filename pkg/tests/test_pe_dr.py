"""Tests for the analytic PE-DR estimator"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.basis import BasisSpec, build_moments, choose_centers
from src.config import EstimatorSettings
from src.data import LabeledDataset, SimplexVector, UnlabeledDataset
from src.errors import ValidationError
from src.pe_dr import (
    cross_validate,
    estimate_pe_dr,
    factorize,
    minimize_theta,
    pe_objective,
    solve_alpha,
)


def random_problem(seed, c=2, lam=0.1, n_per_class=10, n_test=30, d=2):
    rng = np.random.default_rng(seed)
    train = LabeledDataset(rng.normal(size=(c * n_per_class, d)),
                           np.repeat(np.arange(1, c + 1), n_per_class), c)
    test = UnlabeledDataset(rng.normal(loc=0.5, size=(n_test, d)))
    spec = BasisSpec(choose_centers(train.features), sigma=1.0)
    return factorize(build_moments(spec, train, test), lam, basis=spec), rng


class TestAnalyticSolution:
    @pytest.mark.parametrize("seed", range(5))
    def test_normal_equation_residual(self, seed):
        problem, rng = random_problem(seed, c=3)
        theta = rng.dirichlet(np.ones(3))
        alpha = solve_alpha(problem, theta)
        rhs = problem.moments.H @ theta
        residual = np.linalg.norm((problem.moments.G + problem.lam * problem.R) @ alpha - rhs)
        assert residual <= 1e-8 * (1 + np.linalg.norm(rhs))

    def test_regularizer_leaves_constant_unpenalized(self):
        problem, _ = random_problem(0)
        assert problem.R[0, 0] == 0.0
        assert_allclose(np.diag(problem.R)[1:], 1.0)

    def test_closed_form_matches_plug_in(self):
        problem, rng = random_problem(1)
        theta = rng.dirichlet(np.ones(2))
        alpha = solve_alpha(problem, theta)
        G, H = problem.moments.G, problem.moments.H
        direct = alpha @ H @ theta - 0.5 * alpha @ G @ alpha - 0.5
        assert_allclose(pe_objective(problem, theta)[0], direct, rtol=1e-9, atol=1e-12)

    def test_quadratic_form_is_psd(self):
        problem, _ = random_problem(2, c=3)
        assert np.linalg.eigvalsh(problem.A + problem.A.T).min() >= -1e-10

    def test_gradient_matches_finite_differences(self):
        problem, rng = random_problem(3, c=3)
        for _ in range(20):
            theta = rng.dirichlet(np.ones(3))
            _, grad = pe_objective(problem, theta)
            numeric = np.empty(3)
            for k in range(3):
                step = np.zeros(3)
                step[k] = 1e-6
                numeric[k] = (pe_objective(problem, theta + step)[0]
                              - pe_objective(problem, theta - step)[0]) / 2e-6
            assert np.linalg.norm(grad - numeric) <= 1e-5 * max(1.0, np.linalg.norm(grad))

    def test_constant_basis_gives_zero(self):
        rng = np.random.default_rng(4)
        train = LabeledDataset(rng.normal(size=(6, 1)), [1, 1, 1, 2, 2, 2], 2)
        test = UnlabeledDataset(rng.normal(size=(5, 1)))
        spec = BasisSpec(np.empty((0, 1)), sigma=1.0)
        problem = factorize(build_moments(spec, train, test), 0.5, basis=spec)
        for _ in range(20):
            assert abs(pe_objective(problem, rng.dirichlet(np.ones(2)))[0]) <= 1e-12

    def test_rejects_non_positive_lambda(self):
        problem, _ = random_problem(0)
        with pytest.raises(ValidationError):
            factorize(problem.moments, 0.0)

    def test_ratio_coefficients_linear_in_theta(self):
        problem, rng = random_problem(8, c=3)
        first, second = rng.dirichlet(np.ones(3), size=2)
        for weight in (0.0, 0.25, 0.7, 1.0):
            mixed = solve_alpha(problem, weight * first + (1 - weight) * second)
            combined = (weight * solve_alpha(problem, first)
                        + (1 - weight) * solve_alpha(problem, second))
            assert_allclose(mixed, combined, rtol=0, atol=1e-10 * max(1.0, np.abs(combined).max()))

    def test_larger_lambda_shrinks_penalized_coefficients(self):
        problem, rng = random_problem(9)
        theta = rng.dirichlet(np.ones(2))
        norms = [np.linalg.norm(solve_alpha(factorize(problem.moments, lam), theta)[1:])
                 for lam in (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)]
        assert all(later <= earlier * (1 + 1e-10) for earlier, later in zip(norms, norms[1:]))


class TestMinimizeTheta:
    def test_result_on_simplex_and_grid_checked(self):
        problem, _ = random_problem(5)
        estimate = minimize_theta(problem, SimplexVector.uniform(2))
        assert abs(estimate.theta_hat.values.sum() - 1.0) <= 1e-12
        assert estimate.diagnostics["grid_checked"]
        grid_values = [pe_objective(problem, [t, 1 - t])[0] for t in np.linspace(0, 1, 1001)]
        assert estimate.pe_value <= min(grid_values) + 1e-8

    def test_three_classes(self):
        problem, _ = random_problem(6, c=3)
        estimate = minimize_theta(problem, SimplexVector.uniform(3))
        assert estimate.theta_hat.c == 3
        rng = np.random.default_rng(0)
        for _ in range(50):
            other = rng.dirichlet(np.ones(3))
            assert estimate.pe_value <= pe_objective(problem, other)[0] + 1e-6

    def test_init_class_count_checked(self):
        problem, _ = random_problem(7)
        with pytest.raises(ValidationError):
            minimize_theta(problem, SimplexVector.uniform(3))

    @pytest.mark.parametrize("seed", range(5))
    def test_stationary_on_return(self, seed):
        problem, _ = random_problem(seed, c=3)
        estimate = minimize_theta(problem, SimplexVector.uniform(3))
        assert estimate.converged
        assert estimate.gradient_norm <= 1e-6

    def test_constant_basis_returns_init(self):
        rng = np.random.default_rng(10)
        train = LabeledDataset(rng.normal(size=(6, 1)), [1, 1, 1, 2, 2, 2], 2)
        test = UnlabeledDataset(rng.normal(size=(5, 1)))
        spec = BasisSpec(np.empty((0, 1)), sigma=1.0)
        problem = factorize(build_moments(spec, train, test), 0.5, basis=spec)
        init = SimplexVector([0.3, 0.7])
        estimate = minimize_theta(problem, init)
        assert estimate.theta_hat == init
        assert not estimate.diagnostics["grid_replaced"]


class TestCrossValidation:
    def test_single_point_grid(self, shifted_binary):
        train, test = shifted_binary
        assert cross_validate(train, test.unlabeled(), [0.7], [0.01]) == (0.7, 0.01)

    def test_selection_is_on_grid_and_deterministic(self, shifted_binary):
        train, test = shifted_binary
        args = (train, test.unlabeled(), [0.5, 1.0, 2.0], [0.01, 0.1, 1.0])
        first = cross_validate(*args, seed=3)
        assert first == cross_validate(*args, seed=3)
        assert first[0] in (0.5, 1.0, 2.0) and first[1] in (0.01, 0.1, 1.0)

    def test_strong_shift_prefers_small_lambda(self, gauss_1d):
        train = gauss_1d.sample_labeled((50, 50), 11)
        test = gauss_1d.sample_prior(500, (0.1, 0.9), 12)
        sigma, lam = cross_validate(train, test.unlabeled(), [1.0], [1e-3, 1e6], seed=0)
        assert (sigma, lam) == (1.0, 1e-3)

    def test_every_fold_missing_a_class(self):
        train = LabeledDataset(np.arange(6.0)[:, None], [1, 1, 1, 1, 1, 2], 2)
        test = UnlabeledDataset(np.arange(10.0)[:, None])
        with pytest.raises(ValidationError, match="every fold"):
            cross_validate(train, test, [0.5, 1.0], [0.1], folds=5, seed=0)


def test_fixed_hyperparameters_recorded(shifted_binary):
    train, test = shifted_binary
    settings = EstimatorSettings(sigma=1.0, lam=0.1)
    estimate = estimate_pe_dr(train, test.unlabeled(), settings, seed=0)
    assert estimate.diagnostics["sigma"] == 1.0
    assert estimate.diagnostics["lam"] == 0.1


def test_estimate_is_deterministic(shifted_binary):
    train, test = shifted_binary
    a = estimate_pe_dr(train, test.unlabeled(), seed=5)
    b = estimate_pe_dr(train, test.unlabeled(), seed=5)
    assert a.theta_hat == b.theta_hat


@pytest.mark.slow
@pytest.mark.parametrize("theta_star", [0.1, 0.3, 0.5])
def test_recovers_prior_on_large_sample(gauss_1d, theta_star):
    errors = []
    for seed in range(50):
        train = gauss_1d.sample_labeled((200, 200), seed)
        test = gauss_1d.sample_prior(1000, (theta_star, 1 - theta_star), 1000 + seed)
        settings = EstimatorSettings(max_centers=100)
        estimate = estimate_pe_dr(train, test.unlabeled(), settings, seed)
        errors.append(abs(estimate.theta_hat[0] - theta_star))
    assert np.mean(errors) <= 0.05
