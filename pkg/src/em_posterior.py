"""
EM-KLR Estimator
ℓ2-penalized kernel logistic regression for p̂(y|x) and the EM prior-adjustment loop
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .basis import BasisSpec, choose_centers, design_matrix, width_grid
from .config import Config, EstimatorSettings
from .data import SimplexVector, make_rng
from .errors import ValidationError
from .model_selection import derive_seed, fold_ids, weighted_mean

logger = logging.getLogger(__name__)

POSTERIOR_FLOOR = 1e-12
MONOTONE_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class KlrModel:
    """Multinomial logistic model over the kernel basis; weights[:, y-1] scores class y"""

    basis: BasisSpec
    weights: np.ndarray
    ridge: float
    converged: bool = True
    gradient_norm: float = 0.0
    iterations: int = 0

    @property
    def c(self):
        return self.weights.shape[1]

    def scores(self, X):
        return design_matrix(self.basis, X) @ self.weights

    def posterior(self, X):
        """p̂(y|x) for every row of X, shape (m, c)"""
        return softmax(self.scores(X), axis=1)

    def predict(self, X):
        return np.argmax(self.scores(X), axis=1) + 1


def penalized_nll(flat, design, onehot, sample_weights, ridge):
    """Weighted multinomial NLL plus ridge·‖W₋₀‖², and its gradient"""
    c = onehot.shape[1]
    W = flat.reshape(design.shape[1], c)
    S = design @ W
    lse = logsumexp(S, axis=1)
    nll = sample_weights @ (lse - np.sum(S * onehot, axis=1))
    penalty = ridge * np.sum(W[1:] ** 2)
    P = np.exp(S - lse[:, None])
    grad = design.T @ (sample_weights[:, None] * (P - onehot))
    grad[1:] += 2.0 * ridge * W[1:]
    return float(nll + penalty), grad.ravel()


def _onehot(labels, c):
    onehot = np.zeros((labels.size, c))
    onehot[np.arange(labels.size), labels - 1] = 1.0
    return onehot


def fit_klr(design, labels, c, ridge, sample_weights=None, warm_start=None):
    """Minimize the penalized NLL over the weight matrix with L-BFGS

    Returns (weights, converged, gradient_norm, iterations).
    """
    onehot = _onehot(labels, c)
    sample_weights = np.ones(labels.size) if sample_weights is None else np.asarray(
        sample_weights, dtype=float)
    x0 = np.zeros(design.shape[1] * c) if warm_start is None else warm_start.ravel()
    args = (design, onehot, sample_weights, ridge)

    iterations = 0
    for _ in range(2):
        result = minimize(
            penalized_nll, x0, args=args, jac=True, method="L-BFGS-B",
            options={"maxiter": 10000, "ftol": 1e-15, "gtol": 1e-10},
        )
        iterations += result.nit
        x0 = result.x
        _, grad = penalized_nll(x0, *args)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= 1e-5 * (1.0 + np.linalg.norm(x0)):
            return x0.reshape(design.shape[1], c), True, grad_norm, iterations
    return x0.reshape(design.shape[1], c), False, grad_norm, iterations


def train_klr(train, spec, ridge, sample_weights=None):
    """Fit p̂(y|x) on the training set with the given basis and ridge"""
    if not ridge > 0:
        raise ValidationError(f"ridge must be positive, got {ridge}")
    if train.c < 2:
        raise ValidationError("kernel logistic regression needs at least two classes")
    design = design_matrix(spec, train.features)
    weights, converged, grad_norm, iterations = fit_klr(
        design, train.labels, train.c, ridge, sample_weights
    )
    if not converged:
        logger.warning("KLR did not reach the gradient tolerance (|grad| = %.3g)", grad_norm)
    return KlrModel(spec, weights, float(ridge), converged, grad_norm, iterations)


def cross_validate_klr(train, sigma_grid, ridge_grid, folds=Config.CV_FOLDS, seed=None,
                       max_centers=Config.MAX_CENTERS, sample_weights=None):
    """Select (σ, ridge) by k-fold (optionally weighted) multinomial log-loss

    Ties go to the larger σ, then the larger ridge.
    """
    sigma_grid = sorted(set(float(s) for s in sigma_grid), reverse=True)
    ridge_grid = sorted(set(float(r) for r in ridge_grid), reverse=True)
    if not sigma_grid or not ridge_grid:
        raise ValidationError("sigma and ridge grids must be non-empty")
    if len(sigma_grid) == 1 and len(ridge_grid) == 1:
        return sigma_grid[0], ridge_grid[0]

    sample_weights = np.ones(train.n) if sample_weights is None else np.asarray(
        sample_weights, dtype=float)
    rng = make_rng(seed)
    ids = fold_ids(train.n, folds, derive_seed(rng), train.labels)
    center_seed = derive_seed(rng)

    totals = {(s, r): 0.0 for s in sigma_grid for r in ridge_grid}
    used = 0
    for k in range(folds):
        fit_rows, held_rows = ids != k, ids == k
        fit_labels = train.labels[fit_rows]
        if np.unique(fit_labels).size < train.c or sample_weights[fit_rows].sum() <= 0:
            logger.debug("KLR cross-validation: skipping fold %d (empty class)", k)
            continue
        used += 1
        held_labels = train.labels[held_rows]
        for sigma in sigma_grid:
            spec = BasisSpec(choose_centers(train.features[fit_rows], max_centers, center_seed),
                             sigma)
            design = design_matrix(spec, train.features[fit_rows])
            held_design = design_matrix(spec, train.features[held_rows])
            warm = None
            for ridge in ridge_grid:
                warm, _, _, _ = fit_klr(design, fit_labels, train.c, ridge,
                                        sample_weights[fit_rows], warm)
                probs = softmax(held_design @ warm, axis=1)
                picked = probs[np.arange(held_labels.size), held_labels - 1]
                losses = -np.log(np.maximum(picked, POSTERIOR_FLOOR))
                totals[(sigma, ridge)] += weighted_mean(losses, sample_weights[held_rows])

    if used == 0:
        raise ValidationError("KLR cross-validation: every fold lacked a class")
    best, best_score = None, np.inf
    for sigma in sigma_grid:
        for ridge in ridge_grid:
            score = totals[(sigma, ridge)] / used
            if score < best_score:
                best, best_score = (sigma, ridge), score
    logger.debug("KLR cross-validation selected sigma=%.4g ridge=%.4g", *best)
    return best


# ---------------------------------------------------------------------------
# EM prior adjustment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmState:
    """Current test-prior estimate θ_t with the objective/θ trace"""

    theta_t: SimplexVector
    t: int = 0
    history: Tuple[Tuple[float, Tuple[float, ...]], ...] = ()
    converged: bool = False
    monotone: bool = True


def clamp_posteriors(posteriors):
    return np.clip(posteriors, POSTERIOR_FLOOR, 1.0 - POSTERIOR_FLOOR)


def surrogate_objective(posteriors, train_prior, theta):
    """mean_i log Σ_y θ_y p̂(y|x'_i)/p̂(y), skipping points with zero mass"""
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    prior = np.asarray(getattr(train_prior, "values", train_prior), dtype=float)
    mix = (posteriors / prior) @ theta
    mix = mix[mix > 0]
    return float(np.sum(np.log(mix)) / posteriors.shape[0])


def em_update(posteriors, train_prior, theta):
    """One EM step: adjust the posteriors to θ (E) and average them (M)"""
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    prior = np.asarray(getattr(train_prior, "values", train_prior), dtype=float)
    weighted = posteriors / prior * theta
    denominators = weighted.sum(axis=1)
    dead = denominators <= 0
    if np.any(dead):
        logger.debug("EM step: %d test points with zero mixture mass contribute 0", dead.sum())
        denominators = np.where(dead, 1.0, denominators)
        weighted[dead] = 0.0
    new = (weighted / denominators[:, None]).sum(axis=0) / posteriors.shape[0]
    return SimplexVector.normalized(new)


def _check_prior(train_prior):
    if not isinstance(train_prior, SimplexVector):
        train_prior = SimplexVector(train_prior)
    if np.any(train_prior.values <= 0):
        raise ValidationError("training prior must be strictly positive")
    return train_prior


def _advance(state, theta, objective):
    previous = state.history[-1][0] if state.history else -np.inf
    monotone = state.monotone
    if objective < previous - MONOTONE_SLACK:
        logger.warning("EM objective decreased from %.12g to %.12g", previous, objective)
        monotone = False
    return replace(
        state,
        theta_t=theta,
        t=state.t + 1,
        history=state.history + ((objective, tuple(theta.values)),),
        monotone=monotone,
    )


def em_step(model, test, train_prior, state):
    """Apply one EM update to state using the model's test posteriors"""
    train_prior = _check_prior(train_prior)
    posteriors = clamp_posteriors(model.posterior(test.features))
    theta = em_update(posteriors, train_prior, state.theta_t)
    return _advance(state, theta, surrogate_objective(posteriors, train_prior, theta))


def em_iterate(posteriors, train_prior, init=None, tol=Config.EM_TOL,
               max_iter=Config.EM_MAX_ITER):
    """Run EM on a fixed posterior matrix until ‖θ_t − θ_{t−1}‖∞ ≤ tol"""
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    train_prior = _check_prior(train_prior)
    init = train_prior if init is None else init
    if not isinstance(init, SimplexVector):
        init = SimplexVector(init)
    posteriors = clamp_posteriors(np.asarray(posteriors, dtype=float))

    state = EmState(init, 0, ((surrogate_objective(posteriors, train_prior, init),
                               tuple(init.values)),))
    while state.t < max_iter:
        previous = state.theta_t
        theta = em_update(posteriors, train_prior, previous)
        state = _advance(state, theta, surrogate_objective(posteriors, train_prior, theta))
        if np.max(np.abs(theta.values - previous.values)) <= tol:
            return replace(state, converged=True)
    logger.warning("EM reached max_iter=%d without converging", max_iter)
    return state


def em_run(model, test, train_prior, tol=Config.EM_TOL, max_iter=Config.EM_MAX_ITER,
           init=None):
    """EM from init (default: the training prior) on the model's test posteriors"""
    state = em_iterate(model.posterior(test.features), train_prior, init, tol, max_iter)
    return state.theta_t, state


@dataclass(frozen=True)
class EmEstimate:
    theta_hat: SimplexVector
    state: EmState
    model: KlrModel
    diagnostics: dict = field(default_factory=dict)


def estimate_em_klr(train, test, settings=None, seed=None):
    """Full EM-KLR pipeline: select (σ, ridge), fit KLR, run EM"""
    settings = settings or EstimatorSettings()
    rng = make_rng(seed)
    cv_seed, center_seed = derive_seed(rng), derive_seed(rng)

    sigma_grid = (settings.sigma,) if settings.sigma else width_grid(
        train.features, settings.sigma_factors)
    ridge_grid = (settings.ridge,) if settings.ridge else settings.ridge_grid
    sigma, ridge = cross_validate_klr(
        train, sigma_grid, ridge_grid, settings.folds, cv_seed, settings.max_centers
    )
    spec = BasisSpec(choose_centers(train.features, settings.max_centers, center_seed), sigma)
    model = train_klr(train, spec, ridge)
    theta, state = em_run(model, test, train.class_proportions,
                          settings.em_tol, settings.em_max_iter)
    return EmEstimate(theta, state, model,
                      {"sigma": sigma, "ridge": ridge, "iterations": state.t,
                       "converged": state.converged})
