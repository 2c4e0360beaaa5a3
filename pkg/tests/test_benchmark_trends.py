"""Long-running benchmark trends on the synthetic generators"""

import time

import numpy as np
import pytest

from src.basis import BasisSpec, build_moments, choose_centers
from src.generators import default_test_prior, synth_generator
from src.harness import TrialSpec, run_size_sweep, run_sweep
from src.pe_dr import factorize, pe_objective

pytestmark = pytest.mark.slow

THETA_STARS = [0.1, 0.2, 0.3, 0.4, 0.5]


@pytest.fixture(scope="module")
def small_sample_sweep():
    """All five estimators, 10 training points per class, 50 test points, 100 repeats"""
    spec = TrialSpec(("all",), repeats=100, seed=2024, jobs=0, classify=False)
    return run_sweep(synth_generator("gauss-1d"), spec, THETA_STARS).table


def test_every_estimator_beats_error_budget(small_sample_sweep):
    assert len(small_sample_sweep) == 5 * len(THETA_STARS)
    worst = small_sample_sweep.groupby("estimator")["mean_sq_error"].max()
    assert (worst <= 0.25).all(), worst.to_dict()


def test_pe_dr_matches_em_klr_on_most_priors(small_sample_sweep):
    errors = small_sample_sweep.set_index(["estimator", "theta_star"])["mean_sq_error"]
    pe, em = errors.loc["pe-dr"], errors.loc["em-klr"]
    wins = int((pe <= em.reindex(pe.index)).sum())
    assert wins >= 3, {"pe-dr": pe.to_dict(), "em-klr": em.to_dict()}


def test_estimated_prior_helps_the_classifier():
    spec = TrialSpec(("pe-dr", "train-prior"), repeats=100, seed=2024, jobs=0)
    table = run_sweep(synth_generator("gauss-1d"), spec, [0.1]).table.set_index("estimator")
    assert table.loc["pe-dr", "mean_misclass"] <= table.loc["train-prior", "mean_misclass"]


def test_three_class_error_shrinks_with_training_size():
    spec = TrialSpec(("pe-dr",), test_total=100, repeats=200, seed=2024, jobs=0,
                     classify=False, test_prior=default_test_prior("three-class"))
    table = run_size_sweep(synth_generator("three-class"), spec, [10, 30, 100]).table
    medians = table.sort_values("train_per_class")["median_l2_distance"].to_numpy()
    assert np.all(np.diff(medians) < 0), medians


def test_objective_evaluations_cost_less_than_factorization(gauss_1d):
    train = gauss_1d.sample_labeled((250, 250), 0)
    test = gauss_1d.sample_prior(1000, (0.3, 0.7), 1).unlabeled()
    spec = BasisSpec(choose_centers(train.features, 500, 0), 1.0)
    moments = build_moments(spec, train, test)
    thetas = np.random.default_rng(2).dirichlet(np.ones(2), size=1000)

    def best_of_three(work):
        timings = []
        for _ in range(3):
            started = time.perf_counter()
            work()
            timings.append(time.perf_counter() - started)
        return min(timings)

    factorization = best_of_three(lambda: factorize(moments, 0.1, basis=spec))
    problem = factorize(moments, 0.1, basis=spec)
    evaluations = best_of_three(lambda: [pe_objective(problem, theta) for theta in thetas])
    assert evaluations <= 10 * factorization
