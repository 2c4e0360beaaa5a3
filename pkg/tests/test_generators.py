"""Tests for the synthetic Gaussian sources"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import norm

from src.data import LabeledDataset, LabeledSample
from src.errors import ValidationError
from src.generators import GaussianGenerator, default_test_prior, synth_generator


def test_gauss_1d_layout(gauss_1d):
    assert (gauss_1d.c, gauss_1d.d) == (2, 1)
    assert_allclose(gauss_1d.means, [[2.0], [-2.0]])
    assert gauss_1d.bayes_error() == pytest.approx(norm.cdf(-2.0))


def test_multid_means_have_fixed_separation():
    generator = synth_generator("gauss-multid", {"d": 4})
    assert generator.d == 4
    assert np.linalg.norm(generator.means[0] - generator.means[1]) == pytest.approx(4.0)
    assert generator.bayes_error() == pytest.approx(norm.cdf(-2.0))


def test_three_class_triangle():
    generator = synth_generator("three-class")
    assert (generator.c, generator.d) == (3, 2)
    sides = [np.linalg.norm(generator.means[i] - generator.means[j])
             for i, j in ((0, 1), (1, 2), (0, 2))]
    assert_allclose(sides, 3.0)
    assert_allclose(default_test_prior("three-class").values, [0.6, 0.1, 0.3])
    assert default_test_prior("gauss-1d") is None


def test_unknown_kind():
    with pytest.raises(ValidationError):
        synth_generator("uniform")


def test_params_override_means():
    generator = synth_generator("gauss-1d", {"means": [[1.0], [1.0]]})
    assert_allclose(generator.means, [[1.0], [1.0]])
    assert generator.bayes_error() == pytest.approx(0.5)


@pytest.mark.parametrize("covariance", [
    [[1.0, 2.0], [2.0, 1.0]],
    [[1.0, 0.5], [0.0, 1.0]],
])
def test_invalid_covariance(covariance):
    with pytest.raises(ValidationError):
        GaussianGenerator([[0.0, 0.0], [1.0, 1.0]], covariance)


def test_sample_labeled_counts(gauss_1d):
    data = gauss_1d.sample_labeled((3, 7), 0)
    assert isinstance(data, LabeledDataset)
    assert_array_equal(data.class_counts, [3, 7])
    assert_array_equal(data.labels[:3], 1)


def test_sampling_is_deterministic(gauss_1d):
    first = gauss_1d.sample_prior(40, (0.3, 0.7), 11)
    second = gauss_1d.sample_prior(40, (0.3, 0.7), 11)
    assert_array_equal(first.features, second.features)
    assert_array_equal(first.labels, second.labels)
    other = gauss_1d.sample_prior(40, (0.3, 0.7), 12)
    assert not np.array_equal(first.features, other.features)


def test_degenerate_prior_gives_sample(gauss_1d):
    test = gauss_1d.sample_prior(20, (0.0, 1.0), 3)
    assert isinstance(test, LabeledSample)
    assert np.all(test.labels == 2)


def test_prior_length_checked(gauss_1d):
    with pytest.raises(ValidationError):
        gauss_1d.sample_prior(10, (0.2, 0.3, 0.5), 0)


def test_density_matches_normal_pdf(gauss_1d):
    x = np.array([[0.0], [2.0]])
    assert_allclose(gauss_1d.density(x, 1), norm.pdf([0.0, 2.0], loc=2.0))
    assert_allclose(gauss_1d.density(x, 2), norm.pdf([0.0, 2.0], loc=-2.0))


def test_draw_trial_shapes(gauss_1d):
    train, test = gauss_1d.draw_trial((10, 10), 50, (0.4, 0.6), 5)
    assert train.n == 20 and test.n == 50
    assert_array_equal(train.class_counts, [10, 10])


def test_class_conditionals_shared_between_draws():
    generator = synth_generator("gauss-1d")
    train = generator.sample_labeled((4000, 4000), 0)
    test = generator.sample_prior(8000, (0.2, 0.8), 1)
    for y in (1, 2):
        assert train.features[train.labels == y].mean() == pytest.approx(
            test.features[test.labels == y].mean(), abs=0.1)
