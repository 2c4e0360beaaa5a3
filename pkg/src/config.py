"""
Configuration Management
Centralized defaults and loading of flat key = value run files
"""

from dataclasses import dataclass, replace
from typing import Optional

import psutil
from dotenv import dotenv_values

from .errors import ValidationError


class Config:
    """Library and CLI defaults"""

    # Randomness
    DEFAULT_SEED = 0

    # Model selection
    CV_FOLDS = 5
    MAX_CENTERS = 500
    SIGMA_FACTORS = (0.1, 0.2, 0.5, 2.0 / 3.0, 1.0, 1.5, 2.0, 5.0)
    LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
    RIDGE_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)

    # Solvers
    EM_TOL = 1e-8
    EM_MAX_ITER = 10000
    PG_TOL = 1e-6
    PG_MAX_ITER = 1000
    KL_GRID_POINTS = 101

    # Benchmark protocol
    THETA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
    TRAIN_PER_CLASS = 10
    TEST_TOTAL = 50
    REPEATS = 100
    THREE_CLASS_PRIOR = (0.6, 0.1, 0.3)

    # Output
    LOG_DIRECTORY = "logs"
    FLOAT_FORMAT = "%.10g"

    ESTIMATORS = ("em-klr", "kl-kde", "pe-kde", "kl-dr", "pe-dr")

    @classmethod
    def resolve_jobs(cls, jobs):
        """Map a --jobs value to a worker count (0 means one per physical core)"""
        if jobs is None or jobs == 1:
            return 1
        if jobs <= 0:
            return psutil.cpu_count(logical=False) or 1
        return int(jobs)

    @classmethod
    def load_file(cls, path):
        """Read a flat key = value config file into a dict with normalized keys

        Keys are lower-cased and dashes become underscores so that file
        entries line up with click parameter names.
        """
        values = dotenv_values(path)
        settings = {}
        for key, value in values.items():
            if value is None:
                raise ValidationError(f"config file {path}: '{key}' has no value")
            settings[key.strip().lower().replace("-", "_")] = value.strip()
        return settings


@dataclass(frozen=True)
class EstimatorSettings:
    """Resolved hyperparameters for one estimation run

    A value of None for sigma, lam or ridge means "select by cross-validation".
    """

    sigma: Optional[float] = None
    lam: Optional[float] = None
    ridge: Optional[float] = None
    folds: int = Config.CV_FOLDS
    max_centers: int = Config.MAX_CENTERS
    sigma_factors: tuple = Config.SIGMA_FACTORS
    lambda_grid: tuple = Config.LAMBDA_GRID
    ridge_grid: tuple = Config.RIDGE_GRID
    em_tol: float = Config.EM_TOL
    em_max_iter: int = Config.EM_MAX_ITER
    pg_tol: float = Config.PG_TOL
    pg_max_iter: int = Config.PG_MAX_ITER
    standardize: bool = False

    def __post_init__(self):
        for name in ("sigma", "lam", "ridge"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.folds < 2:
            raise ValidationError(f"folds must be at least 2, got {self.folds}")
        if self.max_centers < 1:
            raise ValidationError("max_centers must be at least 1")

    def with_overrides(self, **overrides):
        """Return a copy with the non-None overrides applied"""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})
