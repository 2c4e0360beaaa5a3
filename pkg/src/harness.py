"""
Experiment Harness
Repeated seeded trials over a θ* grid or a training-size grid, per-trial raw
logs, mean/standard-error aggregation and report emission
"""

import io
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .classifiers import fit_weighted_classifier, misclassification_rate
from .config import Config, EstimatorSettings
from .data import (
    SimplexVector,
    frame_to_csv,
    make_rng,
    prior_draw,
    standardize,
    stratified_indices,
    write_atomic,
)
from .errors import PriorShiftError, ValidationError
from .estimators import resolve_estimators, run_estimator
from .model_selection import derive_seed

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "plot-data")
SWEEP_COLUMNS = (
    "estimator", "theta_star", "mean_sq_error", "stderr_sq_error",
    "mean_misclass", "stderr_misclass", "mean_wall_ms",
)
SIZE_COLUMNS = (
    "estimator", "train_per_class", "theta_star", "mean_sq_error", "stderr_sq_error",
    "mean_l2_distance", "stderr_l2_distance", "median_l2_distance",
    "mean_misclass", "stderr_misclass", "mean_wall_ms",
)


class DatasetSource:
    """Trial draws from a fixed labeled pool

    The training draw is stratified; the test draw is a prior draw from the
    rows the training draw left behind.
    """

    def __init__(self, data):
        self.data = data

    @property
    def c(self):
        return self.data.c

    def draw_trial(self, train_counts, test_total, test_prior, seed):
        rng = make_rng(seed)
        chosen = stratified_indices(self.data, train_counts, rng)
        train = self.data.subset(chosen)
        remaining = np.setdiff1d(np.arange(self.data.n), chosen)
        pool = self.data.subset(remaining)
        test = prior_draw(pool, test_total, test_prior, rng)
        return train, test


@dataclass(frozen=True)
class TrialSpec:
    """Protocol of a benchmark run

    test_prior is the fixed test prior of a size sweep; run_sweep takes its
    priors from the θ* grid instead.
    """

    estimators: Tuple[str, ...]
    train_per_class: Tuple[int, ...] = (Config.TRAIN_PER_CLASS, Config.TRAIN_PER_CLASS)
    test_total: int = Config.TEST_TOTAL
    test_prior: Optional[SimplexVector] = None
    repeats: int = Config.REPEATS
    seed: int = Config.DEFAULT_SEED
    settings: EstimatorSettings = field(default_factory=EstimatorSettings)
    jobs: int = 1
    timing: bool = False
    classify: bool = True

    def __post_init__(self):
        object.__setattr__(self, "estimators", resolve_estimators(self.estimators))
        object.__setattr__(self, "train_per_class", tuple(int(n) for n in self.train_per_class))
        if self.repeats < 1:
            raise ValidationError(f"repeats must be at least 1, got {self.repeats}")
        if self.test_total < 1:
            raise ValidationError(f"test_total must be at least 1, got {self.test_total}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.test_prior is not None and not isinstance(self.test_prior, SimplexVector):
            object.__setattr__(self, "test_prior", SimplexVector(self.test_prior))


@dataclass(frozen=True)
class TrialResult:
    """One estimator's outcome on one trial; theta_hat is None when it failed"""

    estimator: str
    theta_star: SimplexVector
    repeat: int
    train_per_class: int
    theta_hat: Optional[SimplexVector] = None
    sq_error: float = np.nan
    l2_distance: float = np.nan
    misclass: float = np.nan
    wall_ms: float = np.nan
    status: str = "ok"

    def to_row(self, c):
        row = {
            "estimator": self.estimator,
            "train_per_class": self.train_per_class,
            "theta_star": theta_label(self.theta_star),
            "repeat": self.repeat,
        }
        values = self.theta_hat.values if self.theta_hat is not None else np.full(c, np.nan)
        for y in range(c):
            row[f"theta_hat_{y + 1}"] = values[y]
        row.update(sq_error=self.sq_error, l2_distance=self.l2_distance,
                   misclass=self.misclass, wall_ms=self.wall_ms, status=self.status)
        return row


@dataclass(frozen=True)
class SweepResult:
    raw: pd.DataFrame
    table: pd.DataFrame


def theta_label(theta):
    """θ₁ as a number for two classes, space-joined entries otherwise"""
    if theta.c == 2:
        return float(theta.values[0])
    return " ".join(f"{v:.10g}" for v in theta.values)


def trial_seed(master, cell, repeat):
    """Seed of trial `repeat` in grid cell `cell`, a pure function of its arguments"""
    return np.random.SeedSequence([int(master), int(cell), int(repeat)])


def _as_prior(value, c):
    if isinstance(value, SimplexVector):
        prior = value
    elif np.ndim(value) == 0:
        if c != 2:
            raise ValidationError(f"a scalar theta* needs two classes, source has {c}")
        prior = SimplexVector.normalized([float(value), 1.0 - float(value)])
    else:
        prior = SimplexVector(value)
    if prior.c != c:
        raise ValidationError(f"theta* {prior.values} has {prior.c} entries for {c} classes")
    return prior


def run_trial(source, spec, theta_star, train_counts, cell, repeat):
    """Draw one trial and run every estimator on it"""
    rng = make_rng(trial_seed(spec.seed, cell, repeat))
    train, test = source.draw_trial(train_counts, spec.test_total, theta_star, derive_seed(rng))
    if spec.settings.standardize:
        train, test = standardize(train, test)
    unlabeled = test.unlabeled()

    results = []
    for name in spec.estimators:
        estimator_seed, classifier_seed = derive_seed(rng), derive_seed(rng)
        common = dict(estimator=name, theta_star=theta_star, repeat=repeat,
                      train_per_class=int(train_counts[0]))
        started = time.perf_counter()
        try:
            theta_hat = run_estimator(name, train, unlabeled, spec.settings,
                                      estimator_seed).theta_hat
        except (PriorShiftError, np.linalg.LinAlgError) as exc:
            logger.warning("cell %d repeat %d: %s failed: %s", cell, repeat, name, exc)
            results.append(TrialResult(status=f"failed: {exc}", **common))
            continue
        wall_ms = (time.perf_counter() - started) * 1000.0 if spec.timing else np.nan

        diff = theta_hat.values - theta_star.values
        misclass = np.nan
        if spec.classify:
            try:
                model = fit_weighted_classifier(train, theta_hat, spec.settings, classifier_seed)
                misclass = misclassification_rate(model, test)
            except (PriorShiftError, np.linalg.LinAlgError) as exc:
                logger.warning("cell %d repeat %d: classifier for %s failed: %s",
                               cell, repeat, name, exc)
        results.append(TrialResult(theta_hat=theta_hat, sq_error=float(diff @ diff),
                                   l2_distance=float(np.sqrt(diff @ diff)),
                                   misclass=misclass, wall_ms=wall_ms, **common))
    return results


def _run_cells(source, spec, cells):
    """cells: list of (theta_star, train_counts); returns the raw trial log"""
    tasks = [
        (theta_star, counts, cell, repeat)
        for cell, (theta_star, counts) in enumerate(cells)
        for repeat in range(spec.repeats)
    ]
    jobs = Config.resolve_jobs(spec.jobs)
    logger.info("running %d trials x %d estimators on %d worker(s)",
                len(tasks), len(spec.estimators), jobs)
    batches = Parallel(n_jobs=jobs)(
        delayed(run_trial)(source, spec, theta_star, counts, cell, repeat)
        for theta_star, counts, cell, repeat in tasks
    )
    rows = [result.to_row(source.c) for batch in batches for result in batch]
    return pd.DataFrame(rows)


def aggregate(raw, by=("estimator", "theta_star"), estimators=None):
    """Mean and standard error per group of the raw trial log

    Failed trials (NaN metrics) are left out of every statistic. Groups are
    ordered by estimator, then by first appearance in the log.
    """
    if raw.empty:
        raise ValidationError("cannot aggregate an empty trial log")
    by = list(by)
    grouped = raw.groupby(by, sort=False)
    table = grouped.agg(
        mean_sq_error=("sq_error", "mean"),
        stderr_sq_error=("sq_error", "sem"),
        mean_l2_distance=("l2_distance", "mean"),
        stderr_l2_distance=("l2_distance", "sem"),
        median_l2_distance=("l2_distance", "median"),
        mean_misclass=("misclass", "mean"),
        stderr_misclass=("misclass", "sem"),
        mean_wall_ms=("wall_ms", "mean"),
    ).reset_index()
    order = list(estimators) if estimators else list(dict.fromkeys(raw["estimator"]))
    table["_rank"] = table["estimator"].map(order.index)
    table = table.sort_values("_rank", kind="stable").drop(columns="_rank")
    return table.reset_index(drop=True)


def run_sweep(source, spec, theta_star_grid):
    """Trials at each θ* of the grid with spec.train_per_class training points per class"""
    grid = [_as_prior(value, source.c) for value in theta_star_grid]
    if not grid:
        raise ValidationError("theta* grid must be non-empty")
    if len(spec.train_per_class) != source.c:
        raise ValidationError(
            f"train_per_class has {len(spec.train_per_class)} entries for {source.c} classes"
        )
    raw = _run_cells(source, spec, [(theta, spec.train_per_class) for theta in grid])
    table = aggregate(raw, ("estimator", "theta_star"), spec.estimators)
    return SweepResult(raw.drop(columns="train_per_class"), table[list(SWEEP_COLUMNS)])


def run_size_sweep(source, spec, train_sizes):
    """Trials at a fixed test prior for each per-class training size"""
    if spec.test_prior is None:
        raise ValidationError("a size sweep needs a fixed test prior")
    prior = _as_prior(spec.test_prior, source.c)
    sizes = [int(n) for n in train_sizes]
    if not sizes or min(sizes) < 1:
        raise ValidationError("train sizes must be a non-empty list of positive counts")
    raw = _run_cells(source, spec, [(prior, (n,) * source.c) for n in sizes])
    table = aggregate(raw, ("estimator", "train_per_class", "theta_star"), spec.estimators)
    return SweepResult(raw, table[list(SIZE_COLUMNS)])


def _plot_blocks(table, float_format):
    """Whitespace-separated series, one block per estimator, blocks split by two blank lines"""
    x = "train_per_class" if "train_per_class" in table.columns else "theta_star"
    metrics = [col for col in table.columns if col.startswith(("mean_", "stderr_", "median_"))]
    buffer = io.StringIO()
    for name, block in table.groupby("estimator", sort=False):
        buffer.write(f"# series: {name}\n")
        buffer.write("# " + " ".join([x] + metrics) + "\n")
        for _, row in block.iterrows():
            value = row[x]
            cells = [f'"{value}"' if isinstance(value, str) else float_format % value]
            cells += [float_format % row[col] for col in metrics]
            buffer.write(" ".join(cells) + "\n")
        buffer.write("\n\n")
    return buffer.getvalue()


def render_report(table, format="csv", preamble=None, float_format=Config.FLOAT_FORMAT):
    if format not in REPORT_FORMATS:
        raise ValidationError(f"unknown report format: {format}")
    if table.empty:
        raise ValidationError("cannot emit an empty result table")
    if format == "csv":
        return frame_to_csv(table, float_format, preamble)
    header = "".join(f"# {key}={value}\n" for key, value in (preamble or {}).items())
    return header + _plot_blocks(table, float_format)


def emit_report(table, path, format="csv", preamble=None, float_format=Config.FLOAT_FORMAT):
    """Write the aggregate table; OSError propagates for unwritable paths"""
    write_atomic(path, render_report(table, format, preamble, float_format))
    logger.info("wrote %s report (%d rows) to %s", format, len(table), path)


def emit_raw_log(raw, path, preamble=None, float_format=Config.FLOAT_FORMAT):
    """Write the per-trial log, one row per (estimator, cell, repeat)"""
    write_atomic(path, frame_to_csv(raw, float_format, preamble))
    logger.info("wrote raw trial log (%d rows) to %s", len(raw), path)
