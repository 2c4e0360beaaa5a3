"""
PE-DR Estimator
Analytic Pearson-divergence estimation by density-ratio fitting and its
minimization over the class-prior simplex
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .basis import (
    BasisSpec,
    RatioModel,
    build_moments,
    choose_centers,
    class_means,
    design_matrix,
    width_grid,
)
from .config import Config, EstimatorSettings
from .data import SimplexVector, make_rng
from .errors import NumericalError, ValidationError
from .model_selection import derive_seed, fold_ids, fold_summary, select_one_standard_error
from .simplex import grid_search_binary, projected_gradient, stationarity

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PeProblem:
    """Factorized system (G + λR) and the cached quadratic form A

    Built with `factorize`; A = HᵀM⁻¹H − ½HᵀM⁻¹GM⁻¹H with M = G + λR, so that
    PÊ(θ) = θᵀAθ − ½ costs only c×c work per θ.
    """

    moments: object
    lam: float
    R: np.ndarray
    system: np.ndarray
    lu: tuple
    A: np.ndarray
    basis: BasisSpec = None

    @property
    def c(self):
        return self.A.shape[0]


def regularizer(size):
    """Diagonal R with R[0, 0] = 0 and ones elsewhere"""
    R = np.eye(size)
    R[0, 0] = 0.0
    return R


def factorize(moments, lam, basis=None):
    """Factorize G + λR once for a given (σ, λ)"""
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    G, H = moments.G, moments.H
    R = regularizer(G.shape[0])
    system = G + lam * R
    lu = lu_factor(system, check_finite=True)
    pivots = np.abs(np.diag(lu[0]))
    if pivots.min() <= np.finfo(float).eps * max(pivots.max(), 1.0) * system.shape[0]:
        raise NumericalError(f"G + lambda R is singular for lambda={lam:g}")
    K = lu_solve(lu, H)
    A = H.T @ K - 0.5 * K.T @ G @ K
    for array in (R, system, A):
        array.setflags(write=False)
    return PeProblem(moments, float(lam), R, system, lu, A, basis)


def solve_alpha(problem, theta):
    """α̂ = (G + λR)⁻¹ Hθ"""
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    rhs = problem.moments.H @ theta
    alpha = lu_solve(problem.lu, rhs)
    residual = np.linalg.norm(problem.system @ alpha - rhs)
    if residual > RESIDUAL_TOL * (1.0 + np.linalg.norm(rhs)):
        raise NumericalError(
            f"ratio solve residual {residual:.3g} too large for lambda={problem.lam:g}"
        )
    return alpha


def pe_objective(problem, theta):
    """PÊ(θ) and its gradient (A + Aᵀ)θ"""
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    A = problem.A
    value = float(theta @ A @ theta) - 0.5
    grad = (A + A.T) @ theta
    return value, grad


@dataclass(frozen=True)
class PeEstimate:
    """Minimizer of PÊ(θ) with the fitted ratio model and solver diagnostics"""

    theta_hat: SimplexVector
    pe_value: float
    alpha_hat: RatioModel
    iterations: int
    gradient_norm: float
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def minimize_theta(problem, init, tol=Config.PG_TOL, max_iter=Config.PG_MAX_ITER):
    """Minimize PÊ(θ) over the simplex

    Projected gradient with step 1/L (L the largest eigenvalue of A + Aᵀ);
    for two classes the result is checked against a 0.001 grid and replaced
    by the grid point if the grid is better.
    """
    if not isinstance(init, SimplexVector):
        init = SimplexVector(init)
    if init.c != problem.c:
        raise ValidationError(f"init has {init.c} entries for {problem.c} classes")

    curvature = float(np.linalg.eigvalsh(problem.A + problem.A.T).max())
    step = 1.0 / curvature if curvature > 1e-300 else 1.0
    result = projected_gradient(
        lambda t: pe_objective(problem, t), init, step=step, tol=tol, max_iter=max_iter
    )
    theta = result.theta
    diagnostics = {"grid_checked": False, "grid_replaced": False}

    if problem.c == 2:
        grid_theta, grid_value = grid_search_binary(lambda t: pe_objective(problem, t)[0])
        diagnostics["grid_checked"] = True
        if pe_objective(problem, theta)[0] > grid_value + 1e-8:
            logger.warning(
                "projected gradient value above grid optimum; using grid point %s",
                grid_theta.values,
            )
            theta = grid_theta
            diagnostics["grid_replaced"] = True

    value, grad = pe_objective(problem, theta)
    alpha = solve_alpha(problem, theta)
    alpha_model = RatioModel(problem.basis, alpha) if problem.basis is not None else alpha
    return PeEstimate(
        theta_hat=theta,
        pe_value=value,
        alpha_hat=alpha_model,
        iterations=result.iterations,
        gradient_norm=stationarity(theta.values, grad, result.step),
        converged=result.converged,
        diagnostics=diagnostics,
    )


def _fold_score(fit_train, fit_labels, fit_test, held_train, held_labels, held_test,
                c, proportions, sigma, lambda_grid, max_centers, seed):
    """Held-out PE criterion J for every λ at one σ on one fold"""
    spec = BasisSpec(choose_centers(fit_train, max_centers, seed), sigma)
    test_design = design_matrix(spec, fit_test)
    G = test_design.T @ test_design / fit_test.shape[0]
    H = class_means(design_matrix(spec, fit_train), fit_labels, c)
    held_test_design = design_matrix(spec, held_test)
    held_train_design = design_matrix(spec, held_train)
    R = regularizer(spec.size)
    rhs = H @ proportions

    scores = {}
    for lam in lambda_grid:
        try:
            alpha = lu_solve(lu_factor(G + lam * R), rhs)
        except (np.linalg.LinAlgError, ValueError):
            scores[lam] = np.inf
            continue
        r_test = held_test_design @ alpha
        r_train = held_train_design @ alpha
        J = 0.5 * np.mean(r_test ** 2)
        for y in range(1, c + 1):
            J -= proportions[y - 1] * np.mean(r_train[held_labels == y])
        scores[lam] = float(J)
    return scores


def cross_validate(
    train,
    test,
    sigma_grid,
    lambda_grid,
    folds=Config.CV_FOLDS,
    seed=None,
    max_centers=Config.MAX_CENTERS,
    train_folds=None,
    test_folds=None,
):
    """Select (σ, λ) by k-fold held-out PE fitting criterion

    θ is fixed to the training class proportions during selection. Fold ids
    can be passed explicitly; otherwise they are derived from seed. Folds
    whose fitting or held-out part lacks a class are skipped.

    Grid points whose mean score lies within one standard error of the best
    count as tied: the largest such λ wins, then the lowest mean among its
    σ values, exact ties going to the larger σ.
    """
    sigma_grid = sorted(set(float(s) for s in sigma_grid), reverse=True)
    lambda_grid = sorted(set(float(v) for v in lambda_grid), reverse=True)
    if not sigma_grid or not lambda_grid:
        raise ValidationError("sigma and lambda grids must be non-empty")
    if len(sigma_grid) == 1 and len(lambda_grid) == 1:
        return sigma_grid[0], lambda_grid[0]

    rng = make_rng(seed)
    if train_folds is None:
        train_folds = fold_ids(train.n, folds, derive_seed(rng), train.labels)
    if test_folds is None:
        test_folds = fold_ids(test.n, folds, derive_seed(rng))
    center_seed = derive_seed(rng)
    proportions = train.class_proportions.values

    fold_scores = {(s, v): [] for s in sigma_grid for v in lambda_grid}
    used = 0
    for k in range(folds):
        fit_rows = train_folds != k
        held_rows = train_folds == k
        fit_labels = train.labels[fit_rows]
        held_labels = train.labels[held_rows]
        fit_test = test.features[test_folds != k]
        held_test = test.features[test_folds == k]
        if (
            np.unique(fit_labels).size < train.c
            or np.unique(held_labels).size < train.c
            or fit_test.shape[0] == 0
            or held_test.shape[0] == 0
        ):
            logger.debug("PE cross-validation: skipping fold %d (empty class)", k)
            continue
        used += 1
        for sigma in sigma_grid:
            scores = _fold_score(
                train.features[fit_rows], fit_labels, fit_test,
                train.features[held_rows], held_labels, held_test,
                train.c, proportions, sigma, lambda_grid, max_centers, center_seed,
            )
            for lam, score in scores.items():
                fold_scores[(sigma, lam)].append(score)

    if used == 0:
        raise ValidationError("PE cross-validation: every fold lacked a class")

    groups = [[(sigma, lam) for sigma in sigma_grid] for lam in lambda_grid]
    best = select_one_standard_error(fold_scores, groups)
    if best is None:
        raise NumericalError("PE cross-validation: no grid point produced a finite score")
    score, error = fold_summary(fold_scores[best])
    logger.debug("PE cross-validation selected sigma=%.4g lambda=%.4g (J=%.5g +- %.2g)",
                 best[0], best[1], score, error)
    return best


def estimate_pe_dr(train, test, settings=None, seed=None):
    """Full PE-DR pipeline: select (σ, λ), factorize once, minimize over θ"""
    settings = settings or EstimatorSettings()
    rng = make_rng(seed)
    cv_seed, center_seed = derive_seed(rng), derive_seed(rng)

    sigma_grid = (settings.sigma,) if settings.sigma else width_grid(
        train.features, settings.sigma_factors)
    lambda_grid = (settings.lam,) if settings.lam else settings.lambda_grid
    sigma, lam = cross_validate(
        train, test, sigma_grid, lambda_grid, settings.folds, cv_seed, settings.max_centers
    )

    spec = BasisSpec(choose_centers(train.features, settings.max_centers, center_seed), sigma)
    problem = factorize(build_moments(spec, train, test), lam, basis=spec)
    estimate = minimize_theta(
        problem, train.class_proportions, settings.pg_tol, settings.pg_max_iter
    )
    estimate.diagnostics.update(sigma=sigma, lam=lam)
    return estimate
