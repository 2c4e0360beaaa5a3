"""Shared fixtures: small synthetic shifted datasets and CSV writers"""

import numpy as np
import pytest

from src.data import save_dataset
from src.generators import synth_generator


@pytest.fixture
def gauss_1d():
    return synth_generator("gauss-1d")


@pytest.fixture
def shifted_binary(gauss_1d):
    """Small-sample draw: 10 training points per class, 50 test points at θ* = (0.3, 0.7)"""
    train = gauss_1d.sample_labeled((10, 10), 1)
    test = gauss_1d.sample_prior(50, (0.3, 0.7), 2)
    return train, test


@pytest.fixture
def csv_files(tmp_path, shifted_binary):
    """train.csv, test.csv (unlabeled) and eval.csv (labeled) for the shifted draw"""
    train, test = shifted_binary
    paths = {
        "train": tmp_path / "train.csv",
        "test": tmp_path / "test.csv",
        "eval": tmp_path / "eval.csv",
    }
    save_dataset(train, paths["train"])
    save_dataset(test.unlabeled(), paths["test"])
    save_dataset(test, paths["eval"])
    return {key: str(path) for key, path in paths.items()}


def write_text(path, text):
    path.write_text(text)
    return str(path)


def random_simplex(rng, c):
    return rng.dirichlet(np.ones(c))
