"""
Instance-Weighted Classifiers
Weighted regularized least squares (two classes) and weighted kernel logistic
regression (any number of classes) driven by estimated class priors
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve

from .basis import BasisSpec, choose_centers, design_matrix, width_grid
from .config import Config, EstimatorSettings
from .data import SimplexVector, make_rng
from .em_posterior import cross_validate_klr, fit_klr
from .errors import NumericalError, ValidationError
from .model_selection import (
    derive_seed,
    fold_ids,
    fold_summary,
    select_one_standard_error,
    weighted_mean,
)

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
KINDS = ("rls-binary", "klr-multiclass")


@dataclass(frozen=True, eq=False)
class WeightedClassifier:
    """Trained classifier over a kernel basis

    rls-binary: coef is a vector, score > 0 predicts class 1, otherwise class 2.
    klr-multiclass: coef is a (b+1, c) matrix, prediction is the argmax score.
    """

    basis: BasisSpec
    coef: np.ndarray
    kind: str
    c: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown classifier kind: {self.kind}")
        coef = np.array(self.coef, dtype=float, copy=True)
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    def decision_function(self, X):
        return design_matrix(self.basis, X) @ self.coef

    def predict(self, X):
        scores = self.decision_function(X)
        if self.kind == "rls-binary":
            return np.where(scores >= 0, 1, 2)
        return np.argmax(scores, axis=1) + 1


def instance_weights(train, theta_hat):
    """w_i = θ̂_{y_i} / (n_{y_i} / n)"""
    if not isinstance(theta_hat, SimplexVector):
        theta_hat = SimplexVector(theta_hat)
    if theta_hat.c != train.c:
        raise ValidationError(f"theta has {theta_hat.c} entries for {train.c} classes")
    ratio = theta_hat.values / train.class_proportions.values
    weights = ratio[train.labels - 1]
    mass = weights.sum() / train.n
    if abs(mass - 1.0) > 1e-12 * max(1.0, train.n):
        raise NumericalError(f"instance weights carry mass {mass!r} instead of 1")
    return weights


def _check_weights(weights, n):
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ValidationError(f"need {n} instance weights, got shape {weights.shape}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValidationError("instance weights must be finite and non-negative")
    if not weights.sum() > 0:
        raise ValidationError("instance weights are all zero")
    return weights


def signed_targets(labels, positive_class=1):
    """±1 coding: +1 for positive_class, −1 for the other class"""
    return np.where(labels == positive_class, 1.0, -1.0)


def solve_weighted_rls(design, targets, weights, ridge):
    """β solving (ΦᵀWΦ + ridge·R)β = ΦᵀWy, R the identity with R[0, 0] = 0"""
    penalty = np.eye(design.shape[1]) * ridge
    penalty[0, 0] = 0.0
    weighted = design * weights[:, None]
    system = design.T @ weighted + penalty
    rhs = weighted.T @ targets
    try:
        beta = solve(system, rhs, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"weighted RLS system is singular (ridge={ridge:g})") from exc
    residual = np.linalg.norm(system @ beta - rhs)
    if residual > RESIDUAL_TOL * (1.0 + np.linalg.norm(rhs)):
        raise NumericalError(f"weighted RLS residual {residual:.3g} too large")
    return beta


def train_weighted_rls(train, weights, spec, ridge, positive_class=1):
    """Minimize Σ_i w_i (φ(x_i)ᵀβ − y_i)² + ridge·‖β₋₀‖² for ±1-coded labels"""
    if train.c != 2:
        raise ValidationError("weighted RLS handles two classes only")
    if not ridge > 0:
        raise ValidationError(f"ridge must be positive, got {ridge}")
    weights = _check_weights(weights, train.n)
    design = design_matrix(spec, train.features)
    beta = solve_weighted_rls(design, signed_targets(train.labels, positive_class), weights, ridge)
    if positive_class != 1:
        beta = -beta
    return WeightedClassifier(spec, beta, "rls-binary", 2)


def train_weighted_klr(train, weights, spec, ridge):
    """Kernel logistic regression with each sample's NLL term scaled by w_i"""
    if train.c < 2:
        raise ValidationError("kernel logistic regression needs at least two classes")
    if not ridge > 0:
        raise ValidationError(f"ridge must be positive, got {ridge}")
    weights = _check_weights(weights, train.n)
    design = design_matrix(spec, train.features)
    coef, converged, grad_norm, _ = fit_klr(design, train.labels, train.c, ridge, weights)
    if not converged:
        logger.warning("weighted KLR did not reach the gradient tolerance (|grad| = %.3g)",
                       grad_norm)
    return WeightedClassifier(spec, coef, "klr-multiclass", train.c)


def misclassification_rate(model, labeled_test):
    """Fraction of test rows whose predicted label differs from the true one"""
    if labeled_test.d != model.basis.d and model.basis.b:
        raise ValidationError(
            f"test data has dimension {labeled_test.d}, model expects {model.basis.d}"
        )
    predictions = model.predict(labeled_test.features)
    return float(np.mean(predictions != labeled_test.labels))


def cross_validate_rls(train, weights, sigma_grid, ridge_grid, folds=Config.CV_FOLDS,
                       seed=None, max_centers=Config.MAX_CENTERS):
    """Select (σ, ridge) by weighted k-fold squared error on held-out rows

    Grid points within one standard error of the best mean error count as
    tied. The largest such σ wins, then the lowest mean among its ridge
    values, exact ties going to the larger ridge.
    """
    sigma_grid = sorted(set(float(s) for s in sigma_grid), reverse=True)
    ridge_grid = sorted(set(float(r) for r in ridge_grid), reverse=True)
    if not sigma_grid or not ridge_grid:
        raise ValidationError("sigma and ridge grids must be non-empty")
    if len(sigma_grid) == 1 and len(ridge_grid) == 1:
        return sigma_grid[0], ridge_grid[0]

    weights = _check_weights(weights, train.n)
    targets = signed_targets(train.labels)
    rng = make_rng(seed)
    ids = fold_ids(train.n, folds, derive_seed(rng), train.labels)
    center_seed = derive_seed(rng)

    fold_scores = {(s, r): [] for s in sigma_grid for r in ridge_grid}
    used = 0
    for k in range(folds):
        fit_rows, held_rows = ids != k, ids == k
        if not weights[fit_rows].sum() > 0 or not weights[held_rows].sum() > 0:
            continue
        used += 1
        for sigma in sigma_grid:
            spec = BasisSpec(choose_centers(train.features[fit_rows], max_centers, center_seed),
                             sigma)
            design = design_matrix(spec, train.features[fit_rows])
            held_design = design_matrix(spec, train.features[held_rows])
            for ridge in ridge_grid:
                try:
                    beta = solve_weighted_rls(design, targets[fit_rows], weights[fit_rows], ridge)
                except NumericalError:
                    fold_scores[(sigma, ridge)].append(np.inf)
                    continue
                errors = (held_design @ beta - targets[held_rows]) ** 2
                fold_scores[(sigma, ridge)].append(weighted_mean(errors, weights[held_rows]))

    if used == 0:
        raise ValidationError("RLS cross-validation: every fold had zero weight")
    groups = [[(sigma, ridge) for ridge in ridge_grid] for sigma in sigma_grid]
    best = select_one_standard_error(fold_scores, groups)
    if best is None:
        raise NumericalError("RLS cross-validation: no grid point produced a finite score")
    logger.debug("RLS cross-validation selected sigma=%.4g ridge=%.4g (error=%.4g +- %.2g)",
                 *best, *fold_summary(fold_scores[best]))
    return best


def fit_weighted_classifier(train, theta_hat, settings=None, seed=None):
    """Weighted RLS for two classes, weighted KLR otherwise, hyperparameters by CV"""
    settings = settings or EstimatorSettings()
    rng = make_rng(seed)
    cv_seed, center_seed = derive_seed(rng), derive_seed(rng)
    weights = instance_weights(train, theta_hat)

    sigma_grid = (settings.sigma,) if settings.sigma else width_grid(
        train.features, settings.sigma_factors)
    ridge_grid = (settings.ridge,) if settings.ridge else settings.ridge_grid
    if train.c == 2:
        sigma, ridge = cross_validate_rls(train, weights, sigma_grid, ridge_grid,
                                          settings.folds, cv_seed, settings.max_centers)
    else:
        sigma, ridge = cross_validate_klr(train, sigma_grid, ridge_grid, settings.folds,
                                          cv_seed, settings.max_centers, weights)
    spec = BasisSpec(choose_centers(train.features, settings.max_centers, center_seed), sigma)
    if train.c == 2:
        return train_weighted_rls(train, weights, spec, ridge)
    return train_weighted_klr(train, weights, spec, ridge)
