"""
Synthetic Generators
Gaussian class-conditional sources whose p(x|y) is shared by training and test draws
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import multivariate_normal, norm

from .config import Config
from .data import LabeledDataset, LabeledSample, SimplexVector, make_rng
from .errors import ValidationError

logger = logging.getLogger(__name__)

KINDS = ("gauss-1d", "gauss-multid", "three-class")


@dataclass(frozen=True, eq=False)
class GaussianGenerator:
    """One Gaussian per class; class y has means[y-1] and covariances[y-1]"""

    means: np.ndarray
    covariances: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        if means.shape[0] == 1 and np.ndim(self.means) == 1:
            means = means.T
        c, d = means.shape
        covariances = np.asarray(self.covariances, dtype=float)
        if covariances.ndim == 0:
            covariances = np.broadcast_to(np.eye(d) * covariances, (c, d, d))
        elif covariances.ndim == 2:
            covariances = np.broadcast_to(covariances, (c, d, d))
        if covariances.shape != (c, d, d):
            raise ValidationError(f"need {c} covariance matrices of shape {d}x{d}")
        if c < 1:
            raise ValidationError("a generator needs at least one class")
        for y, cov in enumerate(covariances, start=1):
            if not np.allclose(cov, cov.T):
                raise ValidationError(f"class {y}: covariance is not symmetric")
            if np.linalg.eigvalsh(cov).min() < -1e-12:
                raise ValidationError(f"class {y}: covariance is not positive semidefinite")
        means, covariances = means.copy(), np.array(covariances)
        means.setflags(write=False)
        covariances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)

    @property
    def c(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    def _sample_class(self, y, size, rng):
        return rng.multivariate_normal(self.means[y - 1], self.covariances[y - 1],
                                       size=size, method="eigh")

    def _assemble(self, labels, rng):
        features = np.empty((labels.size, self.d))
        for y in range(1, self.c + 1):
            slots = np.flatnonzero(labels == y)
            if slots.size:
                features[slots] = self._sample_class(y, slots.size, rng)
        names = tuple(str(y) for y in range(1, self.c + 1))
        if np.unique(labels).size == self.c:
            return LabeledDataset(features, labels, self.c, names)
        return LabeledSample(features, labels, self.c, names)

    def sample_labeled(self, per_class_counts, seed):
        """per_class_counts[y] points of each class y, class 1 first"""
        counts = np.asarray(per_class_counts, dtype=int)
        if counts.size != self.c or np.any(counts < 0):
            raise ValidationError(f"need {self.c} non-negative per-class counts")
        labels = np.repeat(np.arange(1, self.c + 1), counts)
        return self._assemble(labels, make_rng(seed))

    def sample_prior(self, total, prior, seed):
        """total points whose labels are drawn i.i.d. from prior"""
        if not isinstance(prior, SimplexVector):
            prior = SimplexVector(prior)
        if prior.c != self.c:
            raise ValidationError(f"prior has {prior.c} entries for {self.c} classes")
        rng = make_rng(seed)
        labels = rng.choice(np.arange(1, self.c + 1), size=int(total), p=prior.values)
        return self._assemble(labels, rng)

    def density(self, X, y):
        """p(x|y) at the rows of X"""
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        return multivariate_normal(self.means[y - 1], self.covariances[y - 1],
                                   allow_singular=True).pdf(X).reshape(-1)

    def bayes_error(self):
        """Φ(−Δ/2) for two equal-covariance classes at equal priors, Δ the Mahalanobis distance"""
        if self.c != 2 or not np.allclose(self.covariances[0], self.covariances[1]):
            raise ValidationError("closed-form Bayes error needs two equal-covariance classes")
        diff = self.means[0] - self.means[1]
        delta = float(np.sqrt(diff @ np.linalg.pinv(self.covariances[0]) @ diff))
        return float(norm.cdf(-delta / 2.0))

    def draw_trial(self, train_counts, test_total, test_prior, seed):
        """Independent training and test draws for one trial"""
        rng = make_rng(seed)
        train = self.sample_labeled(train_counts, rng)
        test = self.sample_prior(test_total, test_prior, rng)
        return train, test


def synth_generator(kind, params=None):
    """Build a named synthetic source

    gauss-1d: means ±separation/2 (default ±2), variance `variance` (default 1).
    gauss-multid: dimension `d` (default 5), means ±(separation/2)·1/√d, identity covariance.
    three-class: 2-D unit-covariance classes at the corners of a triangle
    with side `separation` (default 3).
    `means` and `covariances` in params override the defaults of any kind.
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise ValidationError(f"unknown generator kind: {kind}")
    if kind == "gauss-1d":
        half = float(params.get("separation", 4.0)) / 2.0
        means = [[half], [-half]]
        covariances = float(params.get("variance", 1.0))
    elif kind == "gauss-multid":
        d = int(params.get("d", 5))
        half = float(params.get("separation", 4.0)) / 2.0
        direction = np.ones(d) / np.sqrt(d)
        means = [half * direction, -half * direction]
        covariances = 1.0
    else:
        side = float(params.get("separation", 3.0))
        means = [[0.0, 0.0], [side, 0.0], [side / 2.0, side * np.sqrt(3.0) / 2.0]]
        covariances = 1.0
    means = params.get("means", means)
    covariances = params.get("covariances", covariances)
    generator = GaussianGenerator(means, covariances, kind)
    logger.debug("built %s generator with c=%d d=%d", kind, generator.c, generator.d)
    return generator


def default_test_prior(kind):
    """Test prior of the three-class protocol, None for the binary kinds"""
    if kind == "three-class":
        return SimplexVector(Config.THREE_CLASS_PRIOR)
    return None
