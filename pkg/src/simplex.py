"""
Simplex Optimization
Euclidean projection onto the probability simplex and projected-gradient minimization
"""

import logging
from dataclasses import dataclass

import numpy as np

from .config import Config
from .data import SimplexVector

logger = logging.getLogger(__name__)


def project_simplex(v):
    """Project v onto {θ : θ ≥ 0, Σθ = 1} in Euclidean norm"""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    tau = css[cond][-1] / rho
    return np.maximum(v - tau, 0.0)


@dataclass(frozen=True)
class SimplexResult:
    """Outcome of a simplex-constrained minimization"""

    theta: SimplexVector
    value: float
    iterations: int
    stationarity: float
    step: float
    converged: bool


def stationarity(theta, grad, step):
    """‖θ − Π(θ − η∇)‖, zero exactly at constrained stationary points"""
    return float(np.linalg.norm(theta - project_simplex(theta - step * grad)))


def projected_gradient(
    fun, init, step=None, tol=Config.PG_TOL, max_iter=Config.PG_MAX_ITER
):
    """Minimize fun over the simplex by projected gradient with backtracking

    Args:
        fun: Callable mapping a θ array to (value, gradient)
        init: Starting SimplexVector
        step: Initial step size; 1/L for an L-smooth objective. When None a
            unit step is tried and adapted by backtracking.
        tol: Stop once the projected-gradient stationarity is at most tol
        max_iter: Iteration cap; the best iterate is returned unconverged

    Stationarity is checked before the first step, so an init that is already
    optimal (including any point of a flat objective) is returned unchanged.
    """
    if not isinstance(init, SimplexVector):
        init = SimplexVector(init)
    theta = init.values.copy()
    value, grad = fun(theta)
    eta = float(step) if step else 1.0
    grow = step is None

    current = init
    for iteration in range(max_iter + 1):
        measure = stationarity(theta, grad, eta)
        if measure <= tol:
            return SimplexResult(current, float(value), iteration, measure, eta, True)
        if iteration == max_iter:
            break

        while True:
            candidate = project_simplex(theta - eta * grad)
            delta = candidate - theta
            new_value, new_grad = fun(candidate)
            bound = value + grad @ delta + (delta @ delta) / (2.0 * eta)
            if new_value <= bound + 1e-15 * max(1.0, abs(value)):
                break
            eta *= 0.5
            if eta < 1e-20:
                logger.debug("projected gradient: step underflow at iteration %d", iteration)
                return SimplexResult(current, float(value), iteration, measure, eta,
                                     measure <= tol)

        theta, value, grad = candidate, new_value, new_grad
        current = SimplexVector.normalized(theta)
        theta = current.values.copy()
        if grow:
            eta *= 1.5

    logger.warning(
        "projected gradient did not converge in %d iterations (stationarity %.3g)",
        max_iter, measure,
    )
    return SimplexResult(current, float(value), max_iter, measure, eta, False)


def grid_search_binary(fun_value, step=0.001):
    """Scan θ₁ over {0, step, …, 1} for a two-class objective

    Returns (SimplexVector, value) of the lowest value; ties keep the smaller θ₁.
    """
    count = int(round(1.0 / step))
    best_theta, best_value = None, np.inf
    for k in range(count + 1):
        t = k / count
        theta = np.array([t, 1.0 - t])
        value = fun_value(theta)
        if value < best_value:
            best_theta, best_value = theta, value
    return SimplexVector.normalized(best_theta), float(best_value)
