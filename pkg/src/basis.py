"""
Basis Functions
Constant-plus-Gaussian basis, linear density-ratio model and the moment matrices G, H
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .config import Config
from .data import make_rng
from .errors import ValidationError

logger = logging.getLogger(__name__)

KERNEL_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """φ_0 ≡ 1 plus one Gaussian of width sigma per center"""

    centers: np.ndarray
    sigma: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.ndim == 1:
            centers = centers[:, None]
        if centers.ndim != 2:
            raise ValidationError("centers must be a 2-D array")
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        centers = centers.copy()
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def b(self):
        return self.centers.shape[0]

    @property
    def d(self):
        return self.centers.shape[1]

    @property
    def size(self):
        """Number of basis functions, b + 1"""
        return self.b + 1


def design_matrix(spec, X):
    """Rows φ(x)ᵀ for every row x of X, shape (m, b + 1)"""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != spec.d and spec.b > 0:
        raise ValidationError(f"points have dimension {X.shape[1]}, basis expects {spec.d}")
    phi = np.ones((X.shape[0], spec.size))
    if spec.b:
        sq = cdist(X, spec.centers, "sqeuclidean")
        kernel = np.exp(-sq / (2.0 * spec.sigma ** 2))
        kernel[kernel < KERNEL_FLOOR] = 0.0
        phi[:, 1:] = kernel
    return phi


def eval_basis(spec, x):
    """φ(x) for a single point x"""
    x = np.asarray(x, dtype=float).reshape(-1)
    if spec.b and x.size != spec.d:
        raise ValidationError(f"point has dimension {x.size}, basis expects {spec.d}")
    return design_matrix(spec, x[None, :])[0]


@dataclass(frozen=True, eq=False)
class RatioModel:
    """r(x) = Σ_ℓ α_ℓ φ_ℓ(x)"""

    basis: BasisSpec
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if alpha.size != self.basis.size:
            raise ValidationError(
                f"alpha has {alpha.size} entries, basis has {self.basis.size} functions"
            )
        alpha = alpha.copy()
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    def __call__(self, X):
        return design_matrix(self.basis, X) @ self.alpha


def eval_ratio(model, x):
    """r(x) at a single point"""
    return float(eval_basis(model.basis, x) @ model.alpha)


@dataclass(frozen=True, eq=False)
class MomentMatrices:
    """G = mean of φ(x')φ(x')ᵀ over test points, H[:, y] = class-y mean of φ(x)"""

    G: np.ndarray
    H: np.ndarray

    @property
    def c(self):
        return self.H.shape[1]


def class_means(design, labels, c):
    """Columns ĥ_y = mean of the design rows of class y"""
    H = np.empty((design.shape[1], c))
    for y in range(1, c + 1):
        rows = design[labels == y]
        if rows.shape[0] == 0:
            raise ValidationError(f"class {y} has no samples")
        H[:, y - 1] = rows.mean(axis=0)
    return H


def build_moments(spec, train, test):
    """Assemble G from the test design and H from the class-wise training means"""
    test_design = design_matrix(spec, test.features)
    G = test_design.T @ test_design / test.n
    G = 0.5 * (G + G.T)
    H = class_means(design_matrix(spec, train.features), train.labels, train.c)
    return MomentMatrices(G, H)


def choose_centers(features, max_centers=Config.MAX_CENTERS, seed=None):
    """Training points used as Gaussian centers

    All points are kept (duplicates included) up to max_centers; above the cap
    a uniform subsample without replacement is taken in original row order.
    """
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if n <= max_centers:
        return features
    rng = make_rng(seed)
    keep = np.sort(rng.choice(n, size=max_centers, replace=False))
    logger.debug("subsampled %d of %d points as basis centers", max_centers, n)
    return features[keep]


def median_distance(features):
    """Median pairwise Euclidean distance, falling back to 1 for degenerate sets"""
    features = np.asarray(features, dtype=float)
    if features.shape[0] < 2:
        return 1.0
    distances = pdist(features)
    positive = distances[distances > 0]
    if positive.size == 0:
        return 1.0
    median = float(np.median(distances))
    return median if median > 0 else float(np.median(positive))


def width_grid(features, factors=Config.SIGMA_FACTORS):
    """Candidate Gaussian widths: the median distance scaled by each factor"""
    scale = median_distance(features)
    return tuple(scale * f for f in factors)
