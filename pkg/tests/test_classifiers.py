"""Tests for prior-weighted RLS and KLR classifiers"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.basis import BasisSpec, design_matrix
from src.classifiers import (
    WeightedClassifier,
    cross_validate_rls,
    fit_weighted_classifier,
    instance_weights,
    misclassification_rate,
    signed_targets,
    solve_weighted_rls,
    train_weighted_klr,
    train_weighted_rls,
)
from src.config import EstimatorSettings
from src.data import LabeledDataset
from src.em_posterior import train_klr
from src.errors import ValidationError
from src.generators import synth_generator


@pytest.fixture
def balanced():
    rng = np.random.default_rng(0)
    features = np.concatenate([rng.normal(-2, 1, (8, 1)), rng.normal(2, 1, (8, 1))])
    return LabeledDataset(features, np.repeat([1, 2], 8), 2)


class TestInstanceWeights:
    def test_training_proportions_give_unit_weights(self, balanced):
        assert_allclose(instance_weights(balanced, balanced.class_proportions), 1.0)

    def test_prior_ratio(self, balanced):
        weights = instance_weights(balanced, [0.8, 0.2])
        assert_allclose(weights[:8], 1.6)
        assert_allclose(weights[8:], 0.4)

    def test_degenerate_prior(self, balanced):
        weights = instance_weights(balanced, [1.0, 0.0])
        assert np.all(weights[8:] == 0.0)

    def test_mass_identity_unbalanced(self):
        data = LabeledDataset(np.zeros((7, 1)), [1, 2, 2, 2, 3, 3, 3], 3)
        weights = instance_weights(data, [0.5, 0.2, 0.3])
        assert abs(weights.sum() / data.n - 1.0) <= 1e-10


class TestWeightedRls:
    def test_unit_weights_are_kernel_ridge(self, balanced):
        spec = BasisSpec(balanced.features, 1.0)
        model = train_weighted_rls(balanced, np.ones(16), spec, ridge=0.1)
        design = design_matrix(spec, balanced.features)
        penalty = 0.1 * np.eye(spec.size)
        penalty[0, 0] = 0.0
        beta = np.linalg.solve(design.T @ design + penalty, design.T @ signed_targets(balanced.labels))
        assert_allclose(model.coef, beta, rtol=1e-8, atol=1e-10)

    def test_weight_scaling_matches_halved_ridge(self, balanced):
        design = design_matrix(BasisSpec(balanced.features, 1.0), balanced.features)
        targets = signed_targets(balanced.labels)
        weights = np.linspace(0.5, 1.5, 16)
        doubled = solve_weighted_rls(design, targets, 2 * weights, 0.2)
        halved = solve_weighted_rls(design, targets, weights, 0.1)
        assert_allclose(doubled, halved, rtol=1e-8, atol=1e-10)

    def test_sign_coding_symmetry(self, balanced):
        design = design_matrix(BasisSpec(balanced.features, 1.0), balanced.features)
        targets = signed_targets(balanced.labels)
        weights = np.ones(16)
        assert_allclose(solve_weighted_rls(design, -targets, weights, 0.1),
                        -solve_weighted_rls(design, targets, weights, 0.1), atol=1e-12)

    def test_positive_class_does_not_change_predictions(self, balanced):
        spec = BasisSpec(balanced.features, 1.0)
        a = train_weighted_rls(balanced, np.ones(16), spec, 0.1)
        b = train_weighted_rls(balanced, np.ones(16), spec, 0.1, positive_class=2)
        assert_allclose(a.decision_function(balanced.features),
                        b.decision_function(balanced.features), atol=1e-10)

    def test_ignored_class(self, balanced):
        spec = BasisSpec(balanced.features, 1.0)
        weights = instance_weights(balanced, [1.0, 0.0])
        model = train_weighted_rls(balanced, weights, spec, ridge=0.1)
        assert np.all(model.predict(np.linspace(-4, 4, 50)[:, None]) == 1)

    def test_zero_weights_rejected(self, balanced):
        with pytest.raises(ValidationError, match="all zero"):
            train_weighted_rls(balanced, np.zeros(16), BasisSpec(balanced.features, 1.0), 0.1)

    def test_binary_only(self):
        data = LabeledDataset(np.arange(3.0)[:, None], [1, 2, 3], 3)
        with pytest.raises(ValidationError):
            train_weighted_rls(data, np.ones(3), BasisSpec(data.features, 1.0), 0.1)

    def test_cross_validation_on_grid(self, balanced):
        sigma, ridge = cross_validate_rls(balanced, np.ones(16), [0.5, 2.0], [0.01, 1.0], seed=0)
        assert sigma in (0.5, 2.0) and ridge in (0.01, 1.0)


class TestWeightedKlr:
    def test_unit_weights_match_plain_klr(self, balanced):
        spec = BasisSpec(balanced.features, 1.0)
        weighted = train_weighted_klr(balanced, np.ones(16), spec, 0.5)
        plain = train_klr(balanced, spec, 0.5)
        assert_allclose(weighted.coef, plain.weights)

    def test_zero_weight_equals_dropping_sample(self, balanced):
        spec = BasisSpec(balanced.features, 1.0)
        weights = np.ones(16)
        weights[3] = 0.0
        with_zero = train_weighted_klr(balanced, weights, spec, 1.0)
        keep = np.delete(np.arange(16), 3)
        dropped = train_weighted_klr(balanced.subset(keep), np.ones(15), spec, 1.0)
        grid = np.linspace(-4, 4, 30)[:, None]
        probs = [np.exp(m.decision_function(grid)) for m in (with_zero, dropped)]
        probs = [p / p.sum(axis=1, keepdims=True) for p in probs]
        assert_allclose(probs[0], probs[1], atol=1e-3)

    def test_three_classes(self):
        generator = synth_generator("three-class")
        train = generator.sample_labeled((15, 15, 15), 1)
        model = fit_weighted_classifier(train, [0.6, 0.1, 0.3], EstimatorSettings(), seed=0)
        assert model.kind == "klr-multiclass"
        assert set(np.unique(model.predict(train.features))) <= {1, 2, 3}


class TestMisclassification:
    def test_perfect(self, balanced):
        spec = BasisSpec(np.empty((0, 1)), 1.0)
        model = WeightedClassifier(spec, np.array([1.0]), "rls-binary")
        data = LabeledDataset(np.zeros((4, 1)), [1, 1, 1, 1], 1)
        assert misclassification_rate(model, data) == 0.0

    def test_constant_majority_classifier(self):
        spec = BasisSpec(np.empty((0, 1)), 1.0)
        model = WeightedClassifier(spec, np.array([-1.0]), "rls-binary")
        data = LabeledDataset(np.zeros((10, 1)), [1] * 3 + [2] * 7, 2)
        assert misclassification_rate(model, data) == pytest.approx(0.3)

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            WeightedClassifier(BasisSpec(np.zeros((1, 1)), 1.0), np.zeros(2), "svm")


def test_binary_pipeline_uses_rls(balanced):
    model = fit_weighted_classifier(balanced, [0.5, 0.5], EstimatorSettings(), seed=1)
    assert model.kind == "rls-binary"
    assert_array_equal(model.predict(np.array([[-3.0], [3.0]])), [1, 2])


@pytest.mark.slow
def test_true_prior_weights_do_not_hurt(gauss_1d):
    weighted, plain = [], []
    for seed in range(50):
        train = gauss_1d.sample_labeled((10, 10), seed)
        test = gauss_1d.sample_prior(50, (0.1, 0.9), 100 + seed)
        settings = EstimatorSettings()
        weighted.append(misclassification_rate(
            fit_weighted_classifier(train, [0.1, 0.9], settings, seed), test))
        plain.append(misclassification_rate(
            fit_weighted_classifier(train, [0.5, 0.5], settings, seed), test))
    assert np.mean(weighted) <= np.mean(plain)
