"""
KDE Baselines
Class-conditional Gaussian KDEs with cross-validated bandwidths, the KL fixed-point
mixture fit and the PE plug-in estimator
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .basis import width_grid
from .config import Config, EstimatorSettings
from .data import SimplexVector, UnlabeledDataset
from .errors import ValidationError
from .simplex import grid_search_binary, projected_gradient

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-300
MONOTONE_SLACK = 1e-10
METHODS = ("likelihood-cv", "least-squares-cv")


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Isotropic Gaussian KDE with one scalar bandwidth"""

    points: np.ndarray
    bandwidth: float

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] < 1:
            raise ValidationError("a KDE needs at least one point")
        if not self.bandwidth > 0:
            raise ValidationError(f"bandwidth must be positive, got {self.bandwidth}")
        points = points.copy()
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def log_density(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None] if self.d == 1 else X[None, :]
        if X.shape[1] != self.d:
            raise ValidationError(f"points have dimension {X.shape[1]}, KDE expects {self.d}")
        h2 = self.bandwidth ** 2
        exponents = -cdist(X, self.points, "sqeuclidean") / (2.0 * h2)
        return (logsumexp(exponents, axis=1) - np.log(self.m)
                - 0.5 * self.d * np.log(2.0 * np.pi * h2))

    def density(self, X):
        return np.exp(self.log_density(X))


def loo_log_likelihood(points, bandwidth):
    """Σ_j log p̂₋ⱼ(x_j), each term over the other m − 1 kernels"""
    m, d = points.shape
    h2 = bandwidth ** 2
    exponents = -cdist(points, points, "sqeuclidean") / (2.0 * h2)
    np.fill_diagonal(exponents, -np.inf)
    terms = logsumexp(exponents, axis=1) - np.log(m - 1) - 0.5 * d * np.log(2.0 * np.pi * h2)
    return float(terms.sum())


def lscv_score(points, bandwidth):
    """∫p̂² − (2/m) Σ_j p̂₋ⱼ(x_j), the integral in closed form"""
    m, d = points.shape
    h2 = bandwidth ** 2
    sq = cdist(points, points, "sqeuclidean")
    log_integral = (logsumexp(-sq / (4.0 * h2)) - 2.0 * np.log(m)
                    - 0.5 * d * np.log(4.0 * np.pi * h2))
    exponents = -sq / (2.0 * h2)
    np.fill_diagonal(exponents, -np.inf)
    log_loo = logsumexp(exponents, axis=1) - np.log(m - 1) - 0.5 * d * np.log(2.0 * np.pi * h2)
    return float(np.exp(log_integral) - 2.0 / m * np.exp(log_loo).sum())


def fit_kde(points, method="likelihood-cv", bandwidth_grid=None):
    """Fit a KDE, choosing the bandwidth from the grid by the given criterion

    likelihood-cv maximizes the leave-one-out log-likelihood; least-squares-cv
    minimizes the LSCV score. Ties go to the larger bandwidth.
    """
    if method not in METHODS:
        raise ValidationError(f"unknown bandwidth method: {method}")
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 2:
        raise ValidationError("bandwidth selection needs at least two points")
    if np.all(points == points[0]):
        raise ValidationError("bandwidth unidentifiable: all points coincide")

    grid = width_grid(points) if bandwidth_grid is None else tuple(bandwidth_grid)
    grid = sorted(set(float(h) for h in grid), reverse=True)
    if not grid:
        raise ValidationError("bandwidth grid must be non-empty")
    if len(grid) == 1:
        return KdeModel(points, grid[0])

    best, best_score = grid[0], np.inf
    for h in grid:
        if method == "likelihood-cv":
            score = -loo_log_likelihood(points, h)
        else:
            score = lscv_score(points, h)
        if score < best_score:
            best, best_score = h, score
    logger.debug("%s selected bandwidth %.4g for %d points", method, best, points.shape[0])
    return KdeModel(points, best)


# ---------------------------------------------------------------------------
# KL-KDE: fixed-point mixture fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureFit:
    """Result of the multiplicative mixture-weight iteration"""

    theta: SimplexVector
    iterations: int
    objectives: tuple
    converged: bool
    monotone: bool


def _scaled(log_densities):
    """Rescale each row by its maximum; rows with no mass are dropped"""
    row_max = log_densities.max(axis=1)
    alive = np.isfinite(row_max)
    if not np.all(alive):
        logger.warning("%d test points have zero density under every class; skipped",
                       (~alive).sum())
    return np.exp(log_densities[alive] - row_max[alive, None])


def mixture_fixed_point(densities, init, tol=Config.EM_TOL, max_iter=Config.EM_MAX_ITER,
                        log_space=False):
    """Maximize mean_i log Σ_y θ_y p(x'_i|y) by the multiplicative update

    θ_y ← θ_y · mean_i p(x'_i|y) / Σ_y' θ_y' p(x'_i|y')

    densities is (n', c); with log_space it holds log densities. The update
    is invariant to rescaling each row, so rows are normalized by their
    maximum before iterating.
    """
    if not isinstance(init, SimplexVector):
        init = SimplexVector(init)
    if np.any(init.values <= 0):
        raise ValidationError("fixed-point init must be strictly positive")
    densities = np.asarray(densities, dtype=float)
    if densities.ndim != 2 or densities.shape[1] != init.c:
        raise ValidationError("densities must be an (n', c) matrix matching init")
    if log_space:
        scaled = _scaled(densities)
    else:
        if np.any(densities < 0):
            raise ValidationError("densities must be non-negative")
        with np.errstate(divide="ignore"):
            scaled = _scaled(np.log(densities))
    if scaled.shape[0] == 0:
        raise ValidationError("no test point has positive density")

    def objective(theta):
        mix = scaled @ theta
        mix = mix[mix > 0]
        return float(np.log(mix).sum() / scaled.shape[0])

    theta = init.values
    objectives = [objective(theta)]
    monotone = True
    for iteration in range(1, max_iter + 1):
        mix = scaled @ theta
        keep = mix > 0
        if not np.all(keep):
            logger.debug("fixed point: %d points with zero mixture mass skipped", (~keep).sum())
        factors = (scaled[keep] / mix[keep, None]).mean(axis=0)
        updated = theta * factors
        residue = abs(updated.sum() - 1.0)
        if residue > 1e-12:
            logger.debug("fixed point: renormalizing sum residue %.3g", residue)
        updated = SimplexVector.normalized(updated).values
        objectives.append(objective(updated))
        if objectives[-1] < objectives[-2] - MONOTONE_SLACK:
            logger.warning("fixed-point objective decreased at iteration %d", iteration)
            monotone = False
        change = np.max(np.abs(updated - theta))
        theta = updated
        if change <= tol:
            return MixtureFit(SimplexVector(theta), iteration, tuple(objectives), True, monotone)
    logger.warning("fixed point reached max_iter=%d without converging", max_iter)
    return MixtureFit(SimplexVector(theta), max_iter, tuple(objectives), False, monotone)


def class_log_densities(class_kdes, X):
    """(m, c) matrix of log p̂(x|y) for the class models"""
    return np.column_stack([kde.log_density(X) for kde in class_kdes])


def kl_kde_fixed_point(class_kdes, test, init, tol=Config.EM_TOL, max_iter=Config.EM_MAX_ITER):
    """Fit test mixture weights to the class KDEs by the fixed-point iteration"""
    log_densities = class_log_densities(class_kdes, test.features)
    return mixture_fixed_point(log_densities, init, tol, max_iter, log_space=True).theta


# ---------------------------------------------------------------------------
# PE-KDE: plug-in Pearson divergence
# ---------------------------------------------------------------------------


def plugin_ratio_matrix(class_kdes, test_kde, test):
    """D[i, y] = p̂(x'_i|y) / p̂'(x'_i), dropping points where p̂' underflows"""
    log_test = test_kde.log_density(test.features)
    alive = log_test >= np.log(DENSITY_FLOOR)
    if not np.all(alive):
        logger.warning("%d test points with p'(x) below %.0e skipped", (~alive).sum(),
                       DENSITY_FLOOR)
    log_class = class_log_densities(class_kdes, test.features[alive])
    return np.exp(log_class - log_test[alive, None])


def pe_plugin_objective(ratios, theta):
    """(1/2n') Σ_i (Σ_y θ_y D[i, y] − 1)² and its gradient"""
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    residual = ratios @ theta - 1.0
    n = ratios.shape[0]
    return float(residual @ residual / (2.0 * n)), ratios.T @ residual / n


def pe_kde_minimize(class_kdes, test_kde, test, init, tol=Config.PG_TOL,
                    max_iter=Config.PG_MAX_ITER):
    """Minimize the plug-in PE estimate over the simplex

    The objective is quadratic with constant Hessian DᵀD/n', so projected
    gradient uses step 1/L; two-class results are checked on a 0.001 grid.
    """
    if not isinstance(init, SimplexVector):
        init = SimplexVector(init)
    ratios = plugin_ratio_matrix(class_kdes, test_kde, test)
    if ratios.shape[0] == 0:
        raise ValidationError("every test point has negligible test density")

    curvature = float(np.linalg.eigvalsh(ratios.T @ ratios / ratios.shape[0]).max())
    step = 1.0 / curvature if curvature > 1e-300 else 1.0
    result = projected_gradient(lambda t: pe_plugin_objective(ratios, t), init,
                                step=step, tol=tol, max_iter=max_iter)
    theta = result.theta
    if init.c == 2:
        grid_theta, grid_value = grid_search_binary(lambda t: pe_plugin_objective(ratios, t)[0])
        if pe_plugin_objective(ratios, theta)[0] > grid_value + 1e-8:
            logger.warning("PE-KDE gradient result above grid optimum; using grid point")
            theta = grid_theta
    return theta


@dataclass(frozen=True)
class KdeEstimate:
    theta_hat: SimplexVector
    diagnostics: dict = field(default_factory=dict)


def _class_kdes(train, method, factors):
    models = []
    for y in range(1, train.c + 1):
        points = train.features[train.labels == y]
        if points.shape[0] < 2 or np.all(points == points[0]):
            # too few distinct points to cross-validate: borrow the pooled scale
            models.append(KdeModel(points, width_grid(train.features, (1.0,))[0]))
            continue
        models.append(fit_kde(points, method, width_grid(points, factors)))
    return models


def estimate_kl_kde(train, test, settings=None, seed=None):
    """KL-KDE: likelihood-CV class KDEs and the fixed-point mixture fit"""
    settings = settings or EstimatorSettings()
    kdes = _class_kdes(train, "likelihood-cv", settings.sigma_factors)
    fit = mixture_fixed_point(class_log_densities(kdes, test.features),
                              train.class_proportions, settings.em_tol,
                              settings.em_max_iter, log_space=True)
    return KdeEstimate(fit.theta, {"bandwidths": tuple(k.bandwidth for k in kdes),
                                   "iterations": fit.iterations,
                                   "converged": fit.converged})


def estimate_pe_kde(train, test, settings=None, seed=None):
    """PE-KDE: least-squares-CV class and test KDEs and the plug-in PE minimizer"""
    settings = settings or EstimatorSettings()
    kdes = _class_kdes(train, "least-squares-cv", settings.sigma_factors)
    test_points = test.features
    if test.n >= 2 and not np.all(test_points == test_points[0]):
        test_kde = fit_kde(test_points, "least-squares-cv",
                           width_grid(test_points, settings.sigma_factors))
    else:
        test_kde = KdeModel(test_points, width_grid(train.features, (1.0,))[0])
    theta = pe_kde_minimize(kdes, test_kde, UnlabeledDataset(test_points),
                            train.class_proportions, settings.pg_tol, settings.pg_max_iter)
    return KdeEstimate(theta, {"bandwidths": tuple(k.bandwidth for k in kdes),
                               "test_bandwidth": test_kde.bandwidth})
