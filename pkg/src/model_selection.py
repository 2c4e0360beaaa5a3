"""
Model Selection Helpers
Seed-derived k-fold assignments shared by every cross-validated estimator
"""

import numpy as np
from sklearn.model_selection import KFold, StratifiedKFold

from .data import make_rng
from .errors import ValidationError


def derive_seed(rng):
    """Draw an integer seed for a sub-stream from a Generator"""
    return int(rng.integers(0, 2 ** 31 - 1))


def fold_ids(n, folds, seed, labels=None):
    """Fold index (0..folds-1) for each of n rows

    With labels the split is stratified when every class has at least
    `folds` members, otherwise plain shuffled k-fold.
    """
    if folds < 2:
        raise ValidationError(f"need at least 2 folds, got {folds}")
    if n < folds:
        raise ValidationError(f"cannot split {n} rows into {folds} folds")
    random_state = derive_seed(make_rng(seed))
    ids = np.empty(n, dtype=int)
    index = np.zeros((n, 1))
    if labels is not None and _stratifiable(np.asarray(labels, dtype=int), folds):
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=random_state)
        splits = splitter.split(index, labels)
    else:
        splitter = KFold(n_splits=folds, shuffle=True, random_state=random_state)
        splits = splitter.split(index)
    for k, (_, held) in enumerate(splits):
        ids[held] = k
    return ids


def _stratifiable(labels, folds):
    counts = np.bincount(labels)
    counts = counts[counts > 0]
    return counts.min() >= folds


def weighted_mean(values, weights):
    """Weighted average that ignores the weights when they sum to zero"""
    total = weights.sum()
    if total <= 0:
        return float(np.mean(values))
    return float(values @ weights / total)


def fold_summary(scores):
    """Mean and standard error of per-fold scores; non-finite folds give (inf, inf)"""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0 or not np.all(np.isfinite(scores)):
        return np.inf, np.inf
    if scores.size == 1:
        return float(scores[0]), 0.0
    return float(scores.mean()), float(scores.std(ddof=1) / np.sqrt(scores.size))


def select_one_standard_error(fold_scores, groups):
    """Pick a candidate by the one-standard-error rule

    fold_scores maps candidate -> per-fold scores (lower is better). groups
    lists candidates from the most regular group to the least. A candidate is
    eligible when its mean is within one standard error of the best mean; the
    first group holding an eligible candidate wins, and inside it the lowest
    mean, ties to the earlier entry. Returns None when no score is finite.
    """
    summary = {key: fold_summary(values) for key, values in fold_scores.items()}
    best_key = min(summary, key=lambda key: summary[key][0], default=None)
    if best_key is None or not np.isfinite(summary[best_key][0]):
        return None
    best_mean, best_se = summary[best_key]
    threshold = best_mean + best_se
    for group in groups:
        eligible = [key for key in group if summary[key][0] <= threshold]
        if eligible:
            return min(eligible, key=lambda key: summary[key][0])
    return best_key
