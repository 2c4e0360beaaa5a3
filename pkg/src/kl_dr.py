"""
KL-DR Estimator
KL-divergence estimation through the density-ratio dual and class-prior
learning by minimizing that estimate over the simplex
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .basis import BasisSpec, RatioModel, choose_centers, class_means, design_matrix, width_grid
from .config import Config, EstimatorSettings
from .data import SimplexVector, make_rng
from .errors import NumericalError, ValidationError
from .model_selection import derive_seed, fold_ids
from .simplex import projected_gradient

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
KKT_TOL = 1e-5
ACTIVE_TOL = 1e-8


def dual_value(train_ratio, train_labels, test_ratio, theta):
    """Empirical KL dual for given ratio values at the training and test points

    −Σ_y θ_y · mean_{i: y_i = y} g(x_i) + mean_i log g(x'_i) + 1
    """
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    value = 1.0 + np.mean(np.log(np.maximum(test_ratio, LOG_FLOOR)))
    for y in range(1, theta.size + 1):
        members = train_ratio[train_labels == y]
        if members.size:
            value -= theta[y - 1] * members.mean()
    return float(value)


@dataclass(frozen=True, eq=False)
class KlDualProblem:
    """Class-wise basis means (the H of the moment matrices) and the test design"""

    basis: BasisSpec
    class_means: np.ndarray
    test_design: np.ndarray

    @classmethod
    def build(cls, spec, train, test):
        H = class_means(design_matrix(spec, train.features), train.labels, train.c)
        return cls(spec, H, design_matrix(spec, test.features))

    @property
    def c(self):
        return self.class_means.shape[1]

    def objective(self, alpha, theta):
        """Dual objective and its gradient in α"""
        theta = np.asarray(getattr(theta, "values", theta), dtype=float)
        linear = self.class_means @ theta
        g = self.test_design @ alpha
        inside = g > LOG_FLOOR
        clamped = np.where(inside, g, LOG_FLOOR)
        value = -linear @ alpha + np.mean(np.log(clamped)) + 1.0
        weights = np.where(inside, 1.0 / clamped, 0.0) / g.size
        grad = -linear + self.test_design.T @ weights
        return float(value), grad


@dataclass(frozen=True)
class KlDualResult:
    """Maximized dual value (the KL estimate) and its maximizer"""

    kl_estimate: float
    alpha: RatioModel
    iterations: int
    kkt_violation: float
    converged: bool


def kkt_violation(alpha, grad):
    """Largest breach of the bound-constrained optimality conditions"""
    free = alpha > ACTIVE_TOL
    violation = 0.0
    if np.any(free):
        violation = float(np.abs(grad[free]).max())
    if np.any(~free):
        violation = max(violation, float(grad[~free].max()))
    return violation


def _maximize(problem, theta, alpha0):
    size = problem.basis.size

    def negative(alpha):
        value, grad = problem.objective(alpha, theta)
        return -value, -grad

    result = minimize(
        negative,
        alpha0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, None)] * size,
        options={"maxiter": 15000, "ftol": 1e-15, "gtol": 1e-10},
    )
    return result


def kl_dual_maximize(train, test, spec, theta, alpha0=None, problem=None):
    """Maximize the KL dual over α ≥ 0 for a fixed θ

    Args:
        alpha0: Warm start; defaults to the all-1/(b+1) vector
        problem: Prebuilt KlDualProblem to reuse across θ values
    """
    if not isinstance(theta, SimplexVector):
        theta = SimplexVector(theta)
    problem = problem or KlDualProblem.build(spec, train, test)
    if theta.c != problem.c:
        raise ValidationError(f"theta has {theta.c} entries for {problem.c} classes")
    size = problem.basis.size
    alpha0 = np.full(size, 1.0 / size) if alpha0 is None else np.maximum(alpha0, 0.0)

    result = _maximize(problem, theta, alpha0)
    iterations = result.nit
    alpha = np.maximum(result.x, 0.0)
    value, grad = problem.objective(alpha, theta)
    violation = kkt_violation(alpha, grad)
    if violation > KKT_TOL:
        # one restart clears stale curvature pairs after hitting the bounds
        retry = _maximize(problem, theta, alpha)
        iterations += retry.nit
        alpha = np.maximum(retry.x, 0.0)
        value, grad = problem.objective(alpha, theta)
        violation = kkt_violation(alpha, grad)

    if not np.isfinite(value):
        raise NumericalError(f"KL dual diverged at theta={theta.values}")
    converged = violation <= KKT_TOL
    if not converged:
        logger.warning("KL dual not converged at theta=%s (KKT violation %.3g)",
                       np.round(theta.values, 4), violation)
    return KlDualResult(value, RatioModel(problem.basis, alpha), iterations, violation, converged)


@dataclass(frozen=True)
class KlThetaResult:
    """Minimizer of the KL estimate over the simplex"""

    theta_hat: SimplexVector
    kl_value: float
    alpha: RatioModel
    evaluations: int
    failures: tuple = ()
    profile: tuple = ()
    diagnostics: dict = field(default_factory=dict)


class _InnerSolver:
    """Evaluates KL(θ) with warm-started inner solves and failure bookkeeping"""

    def __init__(self, train, test, spec):
        self.train, self.test, self.spec = train, test, spec
        self.problem = KlDualProblem.build(spec, train, test)
        self.alpha = None
        self.evaluations = 0
        self.failures = []
        self.cache = {}

    def __call__(self, theta):
        theta = SimplexVector.normalized(theta)
        key = theta.values.tobytes()
        if key in self.cache:
            return self.cache[key]
        self.evaluations += 1
        try:
            result = kl_dual_maximize(
                self.train, self.test, self.spec, theta, self.alpha, self.problem
            )
        except NumericalError as exc:
            logger.warning("KL inner solve failed at theta=%s: %s", theta.values, exc)
            self.failures.append(tuple(theta.values))
            self.cache[key] = (np.inf, None)
            return self.cache[key]
        self.alpha = result.alpha.alpha
        self.cache[key] = (result.kl_estimate, result)
        return self.cache[key]


def _trisect(evaluate, low, high, tol=1e-6):
    """Ternary search for the minimum of a convex function of θ₁ on [low, high]"""
    while high - low > tol:
        m1 = low + (high - low) / 3.0
        m2 = high - (high - low) / 3.0
        if evaluate(m1) <= evaluate(m2):
            high = m2
        else:
            low = m1
    return 0.5 * (low + high)


def kl_minimize_theta(train, test, spec, init=None, grid_points=Config.KL_GRID_POINTS,
                      tol=Config.PG_TOL, max_iter=Config.PG_MAX_ITER):
    """Minimize the KL estimate over θ by nested optimization

    Two classes: scan θ₁ on a grid, then trisect between the neighbours of
    the best grid point. More classes: projected gradient from init, using
    −ĥ_yᵀα*(θ) as the gradient and warm-starting each inner solve.
    """
    init = train.class_proportions if init is None else init
    if not isinstance(init, SimplexVector):
        init = SimplexVector(init)
    if init.c != train.c:
        raise ValidationError(f"init has {init.c} entries for {train.c} classes")
    solver = _InnerSolver(train, test, spec)

    if train.c == 2:
        grid = np.linspace(0.0, 1.0, grid_points)
        profile = []
        for t in grid:
            value, _ = solver(np.array([t, 1.0 - t]))
            profile.append((float(t), float(value)))
        values = np.array([v for _, v in profile])
        if not np.any(np.isfinite(values)):
            raise NumericalError("KL inner solve failed at every grid point")
        k = int(np.argmin(values))
        low, high = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        refined = _trisect(lambda t: solver(np.array([t, 1.0 - t]))[0], low, high)
        candidates = [(values[k], grid[k]), (solver(np.array([refined, 1.0 - refined]))[0], refined)]
        best_value, best_t = min(candidates, key=lambda item: item[0])
        theta = SimplexVector.normalized([best_t, 1.0 - best_t])
        value, result = solver(theta.values)
        return KlThetaResult(theta, float(value), result.alpha, solver.evaluations,
                             tuple(solver.failures), tuple(profile))

    def fun(theta):
        value, result = solver(theta)
        if result is None:
            return np.inf, np.zeros(theta.size)
        return value, -(solver.problem.class_means.T @ result.alpha.alpha)

    outcome = projected_gradient(fun, init, tol=tol, max_iter=max_iter)
    value, result = solver(outcome.theta.values)
    if result is None:
        raise NumericalError("KL inner solve failed at the final theta")
    return KlThetaResult(outcome.theta, float(value), result.alpha, solver.evaluations,
                         tuple(solver.failures),
                         diagnostics={"iterations": outcome.iterations,
                                      "converged": outcome.converged})


def cross_validate_sigma(train, test, sigma_grid, folds=Config.CV_FOLDS, seed=None,
                         max_centers=Config.MAX_CENTERS):
    """Select σ by k-fold held-out dual value at θ̃ = training proportions

    The dual lower-bounds the divergence, so larger held-out values are
    better; ties go to the larger σ.
    """
    sigma_grid = sorted(set(float(s) for s in sigma_grid), reverse=True)
    if not sigma_grid:
        raise ValidationError("sigma grid must be non-empty")
    if len(sigma_grid) == 1:
        return sigma_grid[0]

    rng = make_rng(seed)
    train_folds = fold_ids(train.n, folds, derive_seed(rng), train.labels)
    test_folds = fold_ids(test.n, folds, derive_seed(rng))
    center_seed = derive_seed(rng)
    proportions = train.class_proportions

    totals = dict.fromkeys(sigma_grid, 0.0)
    used = 0
    for k in range(folds):
        fit_rows, held_rows = train_folds != k, train_folds == k
        fit_labels, held_labels = train.labels[fit_rows], train.labels[held_rows]
        if np.unique(fit_labels).size < train.c or np.unique(held_labels).size < train.c:
            logger.debug("KL cross-validation: skipping fold %d (empty class)", k)
            continue
        used += 1
        for sigma in sigma_grid:
            spec = BasisSpec(choose_centers(train.features[fit_rows], max_centers, center_seed),
                             sigma)
            problem = KlDualProblem(
                spec,
                class_means(design_matrix(spec, train.features[fit_rows]), fit_labels, train.c),
                design_matrix(spec, test.features[test_folds != k]),
            )
            size = spec.size
            result = _maximize(problem, proportions, np.full(size, 1.0 / size))
            alpha = np.maximum(result.x, 0.0)
            totals[sigma] += dual_value(
                design_matrix(spec, train.features[held_rows]) @ alpha,
                held_labels,
                design_matrix(spec, test.features[test_folds == k]) @ alpha,
                proportions,
            )

    if used == 0:
        raise ValidationError("KL cross-validation: every fold lacked a class")
    best = max(sigma_grid, key=lambda s: (totals[s], s))
    logger.debug("KL cross-validation selected sigma=%.4g", best)
    return best


def estimate_kl_dr(train, test, settings=None, seed=None):
    """Full KL-DR pipeline: select σ, then minimize the KL estimate over θ"""
    settings = settings or EstimatorSettings()
    rng = make_rng(seed)
    cv_seed, center_seed = derive_seed(rng), derive_seed(rng)

    if settings.sigma:
        sigma = settings.sigma
    else:
        sigma = cross_validate_sigma(
            train, test, width_grid(train.features, settings.sigma_factors),
            settings.folds, cv_seed, settings.max_centers,
        )
    spec = BasisSpec(choose_centers(train.features, settings.max_centers, center_seed), sigma)
    result = kl_minimize_theta(train, test, spec, train.class_proportions,
                               tol=settings.pg_tol, max_iter=settings.pg_max_iter)
    result.diagnostics.update(sigma=sigma)
    return result
