"""
Data Model
Labeled/unlabeled datasets, the simplex prior vector, seeded draws and CSV ingestion
"""

import io
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import pandas as pd

from .errors import DatasetParseError, ValidationError

logger = logging.getLogger(__name__)

SIMPLEX_ATOL = 1e-12

# d, n, positives, negatives of the binary benchmark sets
BENCHMARK_DATASETS = {
    "australian": (14, 690, 307, 383),
    "diabetes": (8, 768, 500, 268),
    "german": (24, 1000, 300, 700),
    "ionosphere": (34, 351, 225, 126),
    "saheart": (9, 462, 302, 160),
    "twonorm": (20, 7400, 3697, 3703),
}


def make_rng(seed):
    """Return a numpy Generator for an int seed, SeedSequence or Generator"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SimplexVector:
    """A probability vector θ: non-negative entries summing to one"""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("simplex vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"simplex vector has non-finite entries: {values}")
        if np.any(values < 0):
            raise ValidationError(f"simplex vector has negative entries: {values}")
        if abs(values.sum() - 1.0) > SIMPLEX_ATOL:
            raise ValidationError(f"simplex vector sums to {values.sum()!r}, not 1")
        object.__setattr__(self, "values", _frozen(values, float))

    @classmethod
    def normalized(cls, values):
        """Build from a vector that is on the simplex up to rounding

        Negative entries within rounding noise are clipped and the vector is
        renormalized; anything further off the simplex is rejected.
        """
        values = np.asarray(values, dtype=float)
        if np.any(values < -1e-9):
            raise ValidationError(f"cannot normalize negative entries: {values}")
        values = np.clip(values, 0.0, None)
        total = values.sum()
        if not total > 0:
            raise ValidationError("cannot normalize a zero vector")
        return cls(values / total)

    @classmethod
    def uniform(cls, c):
        return cls(np.full(c, 1.0 / c))

    @property
    def c(self):
        return self.values.size

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, index):
        return self.values[index]

    def __eq__(self, other):
        if not isinstance(other, SimplexVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True, eq=False)
class UnlabeledDataset:
    """Unlabeled test points x'_1..x'_n'"""

    features: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValidationError("unlabeled dataset needs at least one row")
        bad = np.flatnonzero(~np.all(np.isfinite(features), axis=1))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: non-finite feature value")
        object.__setattr__(self, "features", _frozen(features, float))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, indices):
        return UnlabeledDataset(self.features[np.asarray(indices, dtype=int)])


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Labeled training points with 1-based class labels

    label_names[y - 1] is the original label text of class y.
    """

    features: np.ndarray
    labels: np.ndarray
    c: int
    label_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise ValidationError("features must be a 2-D array")
        if labels.ndim != 1 or labels.size != features.shape[0]:
            raise ValidationError("labels must be a vector with one entry per row")
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise ValidationError("labels must be integers")
        labels = labels.astype(int)
        c = int(self.c)
        if c < 1:
            raise ValidationError("class count must be at least 1")
        if labels.size and (labels.min() < 1 or labels.max() > c):
            raise ValidationError(f"labels must lie in 1..{c}")
        counts = np.bincount(labels, minlength=c + 1)[1:]
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise ValidationError(f"class {empty[0] + 1} has no samples")
        bad = np.flatnonzero(~np.all(np.isfinite(features), axis=1))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: non-finite feature value")
        names = tuple(self.label_names) or tuple(str(y) for y in range(1, c + 1))
        if len(names) != c:
            raise ValidationError("label_names must have one entry per class")

        object.__setattr__(self, "features", _frozen(features, float))
        object.__setattr__(self, "labels", _frozen(labels, int))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "label_names", names)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def class_counts(self):
        """n_y for y = 1..c"""
        return np.bincount(self.labels, minlength=self.c + 1)[1:]

    @property
    def class_proportions(self):
        """The training prior p̂(y) = n_y / n"""
        return SimplexVector.normalized(self.class_counts / self.n)

    def class_indices(self, y):
        return np.flatnonzero(self.labels == y)

    def unlabeled(self):
        """Drop the labels (the withheld-label view of a test draw)"""
        return UnlabeledDataset(self.features)

    def subset(self, indices):
        """Rows at indices; classes that become empty are rejected"""
        indices = np.asarray(indices, dtype=int)
        return LabeledDataset(
            self.features[indices], self.labels[indices], self.c, self.label_names
        )

    def subset_loose(self, indices):
        """Rows at indices without the every-class-present check

        Returns (features, labels) arrays for callers that tolerate empty
        classes, such as cross-validation folds.
        """
        indices = np.asarray(indices, dtype=int)
        return self.features[indices], self.labels[indices]


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


_FIELD_COUNT = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


def _read_cells(path):
    """All non-blank rows of a CSV file as a frame of stripped strings"""
    if not os.path.exists(path):
        raise ValidationError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True,
                            keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ValidationError(f"{path}: no data rows") from None
    except pd.errors.ParserError as exc:
        match = _FIELD_COUNT.search(str(exc))
        if match is None:
            raise DatasetParseError(str(exc).strip()) from None
        expected, line, found = (int(group) for group in match.groups())
        row = line - 1 - (1 if _first_row_is_header(path) else 0)
        raise DatasetParseError(f"expected {expected} fields, found {found}", row=row) from None
    frame = frame.map(lambda cell: cell.strip() if isinstance(cell, str) else cell)
    frame = frame[~(frame.isna() | frame.eq("")).all(axis=1)].reset_index(drop=True)
    if frame.empty:
        raise ValidationError(f"{path}: no data rows")
    return frame


def _non_numeric(cells):
    """Mask of cells that do not parse as numbers ('nan' counts as a number)"""
    cells = cells.fillna("")
    parsed = pd.to_numeric(cells, errors="coerce")
    return parsed.isna() & ~cells.str.lower().eq("nan")


def _first_row_is_header(path):
    first = pd.read_csv(path, header=None, dtype=str, nrows=1, keep_default_na=False)
    return bool(_non_numeric(first.iloc[0].map(str.strip)).any())


def load_dataset(path, format="csv-last-column-label", label_names=None):
    """Load a labeled or unlabeled dataset from a comma-delimited file

    Args:
        path: CSV file path
        format: "csv-last-column-label" (label in the last column) or
            "csv-unlabeled"
        label_names: Encode labels against this existing class list (for
            example a training set's label_names) instead of deriving one.
            Classes may then be absent from the file.

    A first row containing any non-numeric feature cell is treated as a
    header. Labels that are all integer-valued numbers ≥ 1 ("2" or "2.0")
    are kept as-is (c = max label); any other labels are mapped to 1..c in
    first-appearance order. Row indices in errors count data rows from 0.
    """
    if format not in ("csv-last-column-label", "csv-unlabeled"):
        raise ValidationError(f"unknown dataset format: {format}")
    labeled = format == "csv-last-column-label"

    frame = _read_cells(path)
    feature_width = frame.shape[1] - (1 if labeled else 0)
    if feature_width < 1:
        raise DatasetParseError("no feature columns", row=0)
    cells = frame.iloc[:, :feature_width]
    if _non_numeric(cells.iloc[0]).any():
        logger.debug("%s: treating first row as header", path)
        frame = frame.iloc[1:].reset_index(drop=True)
        cells = cells.iloc[1:].reset_index(drop=True)
        if frame.empty:
            raise ValidationError(f"{path}: header but no data rows")

    missing = (frame.isna() | frame.eq("")).to_numpy()
    if missing.any():
        row = int(np.flatnonzero(missing.any(axis=1))[0])
        found = int((~missing[row]).sum())
        raise DatasetParseError(f"expected {frame.shape[1]} fields, found {found}", row=row)
    bad = cells.apply(_non_numeric).to_numpy()
    if bad.any():
        row, column = (int(v) for v in np.argwhere(bad)[0])
        raise DatasetParseError(
            f"non-numeric feature value {cells.iat[row, column]!r}", row=row
        )

    features = cells.to_numpy(dtype=float)
    non_finite = np.flatnonzero(~np.all(np.isfinite(features), axis=1))
    if non_finite.size:
        raise ValidationError(f"row {non_finite[0]}: non-finite feature value")
    if not labeled:
        return UnlabeledDataset(features)

    raw_labels = frame.iloc[:, -1]
    if label_names is None:
        labels, names = _encode_labels(raw_labels)
        dataset = LabeledDataset(features, labels, len(names), names)
    else:
        labels, names = _encode_known_labels(raw_labels, label_names)
        dataset = _draw(LabeledSample(features, labels, len(names), names),
                        np.arange(labels.size))
    logger.info(
        "loaded %s: n=%d d=%d c=%d counts=%s",
        path, dataset.n, dataset.d, dataset.c, dataset.class_counts.tolist(),
    )
    return dataset


def _integer_labels(raw_labels):
    """Integer codes when every label is an integer-valued number ≥ 1, else None"""
    values = pd.to_numeric(raw_labels, errors="coerce").to_numpy(dtype=float)
    if np.all(np.isfinite(values)) and np.all(values >= 1) and np.all(values == np.round(values)):
        return values.astype(int)
    return None


def _encode_labels(raw_labels):
    labels = _integer_labels(raw_labels)
    if labels is not None:
        c = int(labels.max())
        return labels, tuple(str(y) for y in range(1, c + 1))

    mapping = {}
    for label in raw_labels:
        mapping.setdefault(label, len(mapping) + 1)
    labels = np.array([mapping[label] for label in raw_labels])
    return labels, tuple(mapping)


def _encode_known_labels(raw_labels, label_names):
    names = tuple(str(name) for name in label_names)
    mapping = {name: y for y, name in enumerate(names, start=1)}
    integer = _integer_labels(raw_labels)
    if integer is not None and names == tuple(str(y) for y in range(1, len(names) + 1)):
        keys = [str(y) for y in integer]
    else:
        keys = list(raw_labels)
    unknown = [i for i, key in enumerate(keys) if key not in mapping]
    if unknown:
        row = unknown[0]
        raise ValidationError(
            f"row {row}: label {raw_labels.iat[row]!r} is not one of {list(names)}"
        )
    return np.array([mapping[key] for key in keys], dtype=int), names


def dataset_frame(dataset):
    """DataFrame view of a dataset in the loader's column layout"""
    columns = [f"x{j + 1}" for j in range(dataset.d)]
    frame = pd.DataFrame(dataset.features, columns=columns)
    if isinstance(dataset, LabeledDataset):
        names = np.asarray(dataset.label_names, dtype=object)
        frame["label"] = names[dataset.labels - 1]
    return frame


def save_dataset(dataset, path):
    """Write a dataset in the format load_dataset reads back"""
    text = dataset_frame(dataset).to_csv(index=False, float_format="%.17g")
    write_atomic(path, text)


def write_atomic(path, text):
    """Write text to path through a temporary file and os.replace"""
    temp_file = f"{path}.tmp"
    try:
        with open(temp_file, "w", newline="") as f:
            f.write(text)
        os.replace(temp_file, path)
    except OSError:
        if os.path.exists(temp_file):
            os.remove(temp_file)
        raise


def frame_to_csv(frame, float_format="%.10g", preamble=None):
    """Render a DataFrame as CSV text with optional '# key=value' header lines"""
    buffer = io.StringIO()
    for key, value in (preamble or {}).items():
        buffer.write(f"# {key}={value}\n")
    frame.to_csv(buffer, index=False, float_format=float_format, lineterminator="\n")
    return buffer.getvalue()


def check_benchmark_shape(name, dataset):
    """Check a loaded binary benchmark file against its published size"""
    key = name.lower()
    if key not in BENCHMARK_DATASETS:
        raise ValidationError(f"unknown benchmark dataset: {name}")
    d, n, positives, negatives = BENCHMARK_DATASETS[key]
    counts = sorted(dataset.class_counts.tolist())
    expected = sorted([positives, negatives])
    if dataset.d != d or dataset.n != n or counts != expected:
        raise ValidationError(
            f"{name}: expected d={d} n={n} class sizes {expected}, "
            f"got d={dataset.d} n={dataset.n} class sizes {counts}"
        )


def standardize(train, test):
    """Standardize both sets with the training mean and standard deviation"""
    mean = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    scale[scale == 0] = 1.0
    new_train = LabeledDataset(
        (train.features - mean) / scale, train.labels, train.c, train.label_names
    )
    if isinstance(test, LabeledDataset):
        new_test = type(test)(
            (test.features - mean) / scale, test.labels, test.c, test.label_names
        )
    else:
        new_test = UnlabeledDataset((test.features - mean) / scale)
    return new_train, new_test


# ---------------------------------------------------------------------------
# Seeded draws
# ---------------------------------------------------------------------------


def stratified_indices(data, per_class_counts, seed):
    """Row indices of a stratified draw, class 1 rows first"""
    counts = np.asarray(per_class_counts, dtype=int)
    if counts.size != data.c:
        raise ValidationError(f"need {data.c} per-class counts, got {counts.size}")
    if np.any(counts < 0):
        raise ValidationError("per-class counts must be non-negative")
    rng = make_rng(seed)
    chosen = []
    for y in range(1, data.c + 1):
        pool = data.class_indices(y)
        wanted = counts[y - 1]
        if wanted > pool.size:
            raise ValidationError(
                f"class {y}: requested {wanted} samples but only {pool.size} available"
            )
        chosen.append(rng.choice(pool, size=wanted, replace=False))
    return np.concatenate(chosen).astype(int)


def _draw(data, indices):
    """Labeled rows at indices, keeping class count c even if some class is absent"""
    features, labels = data.subset_loose(indices)
    present = np.unique(labels)
    if present.size == data.c:
        return LabeledDataset(features, labels, data.c, data.label_names)
    return LabeledSample(features, labels, data.c, data.label_names)


class LabeledSample(LabeledDataset):
    """Labeled draw in which some classes may have no rows

    Used for test draws under a degenerate prior; estimators that need every
    class present reject it through class_proportions.
    """

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        labels = np.asarray(self.labels, dtype=int)
        if labels.size and (labels.min() < 1 or labels.max() > self.c):
            raise ValidationError(f"labels must lie in 1..{self.c}")
        object.__setattr__(self, "features", _frozen(features, float))
        object.__setattr__(self, "labels", _frozen(labels, int))
        object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def class_proportions(self):
        raise ValidationError("class proportions undefined: some class has no samples")


def stratified_draw(data, per_class_counts, seed):
    """Draw per_class_counts[y] rows of each class y without replacement

    Classes with a zero count are absent from the result; the class count c
    of the source dataset is kept so labels stay comparable.
    """
    return _draw(data, stratified_indices(data, per_class_counts, seed))


def prior_indices(data, total, prior, seed):
    """Row indices of a prior draw

    The label sequence is sampled i.i.d. from the prior first, then a point of
    each drawn class is taken uniformly without replacement.
    """
    if not isinstance(prior, SimplexVector):
        prior = SimplexVector(prior)
    if prior.c != data.c:
        raise ValidationError(f"prior has {prior.c} entries for {data.c} classes")
    if total < 0:
        raise ValidationError("total must be non-negative")
    rng = make_rng(seed)
    labels = rng.choice(np.arange(1, data.c + 1), size=int(total), p=prior.values)
    indices = np.empty(labels.size, dtype=int)
    for y in range(1, data.c + 1):
        slots = np.flatnonzero(labels == y)
        if slots.size == 0:
            continue
        pool = data.class_indices(y)
        if slots.size > pool.size:
            raise ValidationError(
                f"class {y} exhausted: need {slots.size} samples, {pool.size} available"
            )
        indices[slots] = rng.permutation(pool)[: slots.size]
    return indices


def prior_draw(data, total, prior, seed):
    """Draw total rows whose labels follow prior (see prior_indices)"""
    return _draw(data, prior_indices(data, total, prior, seed))
