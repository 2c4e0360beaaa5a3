"""Tests for the trial harness and report emission"""

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

import src.estimators
from src.config import EstimatorSettings
from src.data import SimplexVector
from src.errors import NumericalError, ValidationError
from src.generators import synth_generator
from src.harness import (
    SIZE_COLUMNS,
    SWEEP_COLUMNS,
    DatasetSource,
    TrialSpec,
    aggregate,
    emit_raw_log,
    emit_report,
    render_report,
    run_size_sweep,
    run_sweep,
    run_trial,
    theta_label,
    trial_seed,
)

FIXED = EstimatorSettings(sigma=1.0, lam=0.1, ridge=0.1)


def test_train_prior_at_balanced_theta(gauss_1d):
    spec = TrialSpec(("train-prior",), repeats=1, classify=False)
    result = run_sweep(gauss_1d, spec, [0.5])
    assert list(result.table.columns) == list(SWEEP_COLUMNS)
    assert len(result.table) == 1
    assert result.table.loc[0, "mean_sq_error"] == 0.0
    assert np.isnan(result.table.loc[0, "stderr_sq_error"])
    assert np.isnan(result.table.loc[0, "mean_wall_ms"])


def test_sweep_rows_follow_estimator_then_grid_order(gauss_1d):
    spec = TrialSpec(("pe-dr", "train-prior"), repeats=2, settings=FIXED, classify=False)
    result = run_sweep(gauss_1d, spec, [0.2, 0.4])
    assert result.table["estimator"].tolist() == ["pe-dr", "pe-dr", "train-prior", "train-prior"]
    assert result.table["theta_star"].tolist() == [0.2, 0.4, 0.2, 0.4]
    assert len(result.raw) == 2 * 2 * 2
    assert "train_per_class" not in result.raw.columns


def test_sweep_is_reproducible(gauss_1d):
    spec = TrialSpec(("pe-dr",), repeats=2, seed=7, settings=FIXED)
    first = run_sweep(gauss_1d, spec, [0.3])
    second = run_sweep(gauss_1d, spec, [0.3])
    assert render_report(first.table) == render_report(second.table)
    pd.testing.assert_frame_equal(first.raw, second.raw)


def test_seed_changes_draws(gauss_1d):
    base = TrialSpec(("pe-dr",), repeats=2, seed=1, settings=FIXED, classify=False)
    other = TrialSpec(("pe-dr",), repeats=2, seed=2, settings=FIXED, classify=False)
    first = run_sweep(gauss_1d, base, [0.3]).raw["theta_hat_1"].to_numpy()
    second = run_sweep(gauss_1d, other, [0.3]).raw["theta_hat_1"].to_numpy()
    assert not np.array_equal(first, second)


def test_table_recomputes_from_raw(gauss_1d):
    spec = TrialSpec(("pe-dr",), repeats=4, settings=FIXED)
    result = run_sweep(gauss_1d, spec, [0.1, 0.3])
    again = aggregate(result.raw)
    assert_allclose(again["mean_sq_error"], result.table["mean_sq_error"])
    assert_allclose(again["stderr_misclass"], result.table["stderr_misclass"])
    by_hand = result.raw[result.raw["theta_star"] == 0.1]["sq_error"]
    assert result.table.loc[0, "mean_sq_error"] == pytest.approx(by_hand.mean())
    assert result.table.loc[0, "stderr_sq_error"] == pytest.approx(
        by_hand.std(ddof=1) / np.sqrt(4))


def test_failed_trials_are_recorded_as_missing(gauss_1d, monkeypatch):
    def failing(train, test, settings, seed):
        raise NumericalError("solver blew up")

    monkeypatch.setitem(src.estimators.ESTIMATORS, "pe-dr", failing)
    spec = TrialSpec(("pe-dr", "train-prior"), repeats=2, classify=False)
    result = run_sweep(gauss_1d, spec, [0.5])
    failed = result.raw[result.raw["estimator"] == "pe-dr"]
    assert failed["status"].str.startswith("failed").all()
    assert failed["theta_hat_1"].isna().all()
    row = result.table[result.table["estimator"] == "pe-dr"].iloc[0]
    assert np.isnan(row["mean_sq_error"])
    assert result.table[result.table["estimator"] == "train-prior"]["mean_sq_error"].iloc[0] == 0.0


def test_run_trial_keeps_estimator_order(gauss_1d):
    spec = TrialSpec(("train-prior", "pe-dr"), settings=FIXED, classify=False)
    results = run_trial(gauss_1d, spec, SimplexVector([0.3, 0.7]), (10, 10), 0, 0)
    assert [r.estimator for r in results] == ["train-prior", "pe-dr"]
    assert all(r.status == "ok" for r in results)
    assert all(np.isnan(r.misclass) for r in results)


def test_timing_is_opt_in(gauss_1d):
    spec = TrialSpec(("train-prior",), repeats=1, timing=True, classify=False)
    result = run_sweep(gauss_1d, spec, [0.5])
    assert result.raw["wall_ms"].iloc[0] >= 0.0


def test_size_sweep_three_classes():
    generator = synth_generator("three-class")
    spec = TrialSpec(("train-prior",), repeats=2, test_total=30,
                     test_prior=(0.6, 0.1, 0.3), classify=False)
    result = run_size_sweep(generator, spec, [5, 8])
    assert list(result.table.columns) == list(SIZE_COLUMNS)
    assert result.table["train_per_class"].tolist() == [5, 8]
    assert result.table["theta_star"].tolist() == ["0.6 0.1 0.3"] * 2
    expected = np.sum((np.full(3, 1 / 3) - [0.6, 0.1, 0.3]) ** 2)
    assert_allclose(result.table["mean_sq_error"], expected)
    assert_allclose(result.table["median_l2_distance"], np.sqrt(expected))
    assert {"theta_hat_1", "theta_hat_2", "theta_hat_3"} <= set(result.raw.columns)


def test_size_sweep_needs_prior(gauss_1d):
    with pytest.raises(ValidationError, match="fixed test prior"):
        run_size_sweep(gauss_1d, TrialSpec(("train-prior",)), [5])


def test_grid_validation(gauss_1d):
    spec = TrialSpec(("train-prior",), repeats=1)
    with pytest.raises(ValidationError):
        run_sweep(gauss_1d, spec, [])
    with pytest.raises(ValidationError):
        run_sweep(gauss_1d, spec, [(0.2, 0.3, 0.5)])
    with pytest.raises(ValidationError):
        run_sweep(synth_generator("three-class"), spec, [0.5])


def test_spec_validation():
    with pytest.raises(ValidationError):
        TrialSpec(("train-prior",), repeats=0)
    with pytest.raises(ValidationError, match="unknown estimator"):
        TrialSpec(("svm",))
    assert TrialSpec("all").estimators == ("em-klr", "kl-kde", "pe-kde", "kl-dr", "pe-dr")


def test_trial_seed_is_pure():
    a = np.random.default_rng(trial_seed(3, 1, 4)).random(3)
    b = np.random.default_rng(trial_seed(3, 1, 4)).random(3)
    c = np.random.default_rng(trial_seed(3, 4, 1)).random(3)
    assert_allclose(a, b)
    assert not np.allclose(a, c)


def test_theta_label():
    assert theta_label(SimplexVector([0.3, 0.7])) == 0.3
    assert theta_label(SimplexVector([0.5, 0.25, 0.25])) == "0.5 0.25 0.25"


def test_dataset_source_draws_disjoint_sets(gauss_1d):
    pool = gauss_1d.sample_labeled((30, 30), 0)
    source = DatasetSource(pool)
    train, test = source.draw_trial((5, 5), 20, SimplexVector([0.5, 0.5]), 1)
    assert train.n == 10 and test.n == 20
    shared = set(train.features[:, 0]) & set(test.features[:, 0])
    assert not shared


def test_dataset_source_exhaustion(gauss_1d):
    source = DatasetSource(gauss_1d.sample_labeled((6, 6), 0))
    with pytest.raises(ValidationError):
        source.draw_trial((5, 5), 10, SimplexVector([0.9, 0.1]), 2)


def test_reports(tmp_path, gauss_1d):
    spec = TrialSpec(("train-prior",), repeats=2, classify=False)
    result = run_sweep(gauss_1d, spec, [0.2, 0.5])

    text = render_report(result.table, "plot-data", {"seed": 0})
    assert text.startswith("# seed=0\n")
    assert "# series: train-prior" in text
    assert text.endswith("\n\n\n")

    out = tmp_path / "table.csv"
    emit_report(result.table, out, preamble={"repeats": 2})
    lines = out.read_text().splitlines()
    assert lines[0] == "# repeats=2"
    assert lines[1] == ",".join(SWEEP_COLUMNS)

    raw_out = tmp_path / "raw.csv"
    emit_raw_log(result.raw, raw_out)
    assert len(raw_out.read_text().splitlines()) == 1 + 2 * 2

    with pytest.raises(ValidationError):
        render_report(result.table, "json")
    with pytest.raises(OSError):
        emit_report(result.table, tmp_path / "missing" / "table.csv")
