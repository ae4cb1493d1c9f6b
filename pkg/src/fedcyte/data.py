# -*- coding: utf-8 -*-

"""Datasets, the synthetic non-IID generator, CSV ingestion, splitting, and weighted sampling.

The synthetic generator stands in for blood smear images: every class has a global
Gaussian prototype, every institution draws its own class counts around those
prototypes, and an institution-specific affine transform plays the role of staining
and imaging differences between sites.
"""

import logging
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .constants import CLASS_NAMES, DEFAULT_CLASS_SEP, DEFAULT_DIMENSION
from .params import DimensionError
from .utils import atomic_write_text, derive_seed

__all__ = [
    'DatasetFormatError',
    'LabeledDataset',
    'SplitSet',
    'ClientShift',
    'ClientProfile',
    'CLIENT1_COUNTS',
    'CLIENT2_COUNTS',
    'HOLDOUT_CLASSES',
    'GENERATION_PRESETS',
    'get_builtin_profiles',
    'class_prototypes',
    'generate_synthetic',
    'load_csv',
    'write_csv',
    'split_indices',
    'split',
    'weighted_sampler',
    'concatenate',
]

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

#: Per-class counts of the first training institution, in :data:`CLASS_NAMES` order.
#: The listed counts sum to 9,283 even though the institution reports 21,200 images in total.
CLIENT1_COUNTS = (164, 42, 86, 2705, 350, 61, 1030, 138, 529, 1911, 2267)
#: Per-class counts of the second training institution (8,985 images)
CLIENT2_COUNTS = (66, 47, 254, 2362, 7, 9, 1074, 25, 42, 5090, 9)
#: Classes that appear in the external validation institution
HOLDOUT_CLASSES = (
    'Band neutrophils',
    'Basophil',
    'Eosinophils',
    'Lymphocyte',
    'Metamyelocyte',
    'Monocyte',
    'Myelocyte',
    'Promyelocyte',
    'Segmented neutrophils',
)

#: The fractions of a client's data that go to validation, local test, and global test
HOLDOUT_FRACTION = Fraction(4, 30)

#: Named generation settings: (fraction of the published counts, dimension, class separation, seed)
GENERATION_PRESETS = {
    'wbc': (1.0, DEFAULT_DIMENSION, DEFAULT_CLASS_SEP, 0),
    'wbc-x0.1': (0.1, DEFAULT_DIMENSION, DEFAULT_CLASS_SEP, 0),
}

_CLASSES_PREFIX = '#classes:'


class DatasetFormatError(ValueError):
    """Raised when a dataset file or array violates the expected format."""


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature vectors with integer class labels."""

    #: An n x d matrix of finite reals
    features: np.ndarray
    #: n class indices into ``class_names``
    labels: np.ndarray
    class_names: Tuple[str, ...]

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).ravel()
        class_names = tuple(self.class_names)
        if features.ndim != 2:
            raise DimensionError(f'features must be a matrix, got shape {features.shape}')
        if features.shape[0] != labels.size:
            raise DimensionError(f'{features.shape[0]} feature rows but {labels.size} labels')
        if labels.size < 1:
            raise DatasetFormatError('no samples')
        if not class_names:
            raise DatasetFormatError('no class names')
        if labels.min() < 0 or labels.max() >= len(class_names):
            raise DatasetFormatError(f'labels must be in [0, {len(class_names)})')
        if not np.all(np.isfinite(features)):
            raise DatasetFormatError('features contain non-finite values')
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'class_names', class_names)

    def __len__(self) -> int:  # noqa:D105
        return int(self.labels.size)

    @property
    def dimension(self) -> int:
        """Get the number of features per sample."""
        return int(self.features.shape[1])

    @property
    def num_classes(self) -> int:
        """Get the number of declared classes."""
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        """Count the samples of each declared class."""
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices: Sequence[int]) -> 'LabeledDataset':
        """Get the dataset restricted to the given row indices."""
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[indices], self.labels[indices], self.class_names)


@dataclass(frozen=True)
class SplitSet:
    """The four-way partition of one client's data."""

    train: LabeledDataset
    validation: LabeledDataset
    local_test: LabeledDataset
    global_test: LabeledDataset

    def sizes(self) -> Tuple[int, int, int, int]:
        """Get the sizes of the four buckets."""
        return len(self.train), len(self.validation), len(self.local_test), len(self.global_test)


@dataclass(frozen=True)
class ClientShift:
    """An institution-specific affine transform ``x -> R (scale * x) + offset``."""

    scale: Tuple[float, ...]
    offset: Tuple[float, ...]
    #: Seed of the random rotation ``R``. If None, ``R`` is the identity.
    rotation_seed: Optional[int] = None

    @classmethod
    def identity(cls, dimension: int) -> 'ClientShift':
        """Get the transform that leaves features unchanged."""
        return cls(scale=(1.0,) * dimension, offset=(0.0,) * dimension)

    def rotation(self) -> np.ndarray:
        """Get the rotation matrix."""
        d = len(self.scale)
        if self.rotation_seed is None:
            return np.eye(d)
        rng = np.random.default_rng(self.rotation_seed)
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        # fix column signs so the decomposition is unique
        return q * np.where(np.diag(r) < 0, -1.0, 1.0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Transform a matrix of row vectors."""
        if x.shape[1] != len(self.scale) or len(self.offset) != len(self.scale):
            raise DimensionError(f'shift of dimension {len(self.scale)} cannot transform shape {x.shape}')
        return (x * np.asarray(self.scale)) @ self.rotation().T + np.asarray(self.offset)


@dataclass(frozen=True)
class ClientProfile:
    """The class distribution and domain shift of one institution."""

    name: str
    class_counts: Tuple[int, ...]
    shift: ClientShift

    def __post_init__(self):
        counts = tuple(int(c) for c in self.class_counts)
        if any(c < 0 for c in counts) or not any(counts):
            raise ValueError(f'[{self.name}] counts must be non-negative with at least one positive: {counts}')
        object.__setattr__(self, 'class_counts', counts)

    @property
    def total(self) -> int:
        """Get the total number of samples."""
        return sum(self.class_counts)


def _scale_counts(counts: Sequence[int], fraction: float) -> Tuple[int, ...]:
    if fraction == 1.0:
        return tuple(counts)
    # exact rational arithmetic so that e.g. 30 * 0.1 scales to 3, not 4
    ratio = Fraction(str(fraction))
    return tuple(math.ceil(count * ratio) for count in counts)


def _make_shift(dimension: int, seed: int) -> ClientShift:
    rng = np.random.default_rng(seed)
    return ClientShift(
        scale=tuple(float(s) for s in rng.uniform(0.8, 1.25, size=dimension)),
        offset=tuple(float(o) for o in rng.normal(0.0, 0.5, size=dimension)),
        rotation_seed=seed + 1,
    )


def get_builtin_profiles(dimension: int = DEFAULT_DIMENSION, fraction: float = 1.0) -> List[ClientProfile]:
    """Get the two training institutions and the held-out institution.

    :param dimension: The feature dimension the shifts are built for
    :param fraction: Multiplier on the published counts. Non-zero counts never drop below one.
    :returns: Profiles named ``client1``, ``client2``, and ``client3-holdout``
    """
    if not 0 < fraction <= 1:
        raise ValueError(f'fraction must be in (0, 1]: {fraction}')
    holdout_counts = tuple(
        count if name in HOLDOUT_CLASSES else 0
        for name, count in zip(CLASS_NAMES, CLIENT2_COUNTS)
    )
    return [
        ClientProfile('client1', _scale_counts(CLIENT1_COUNTS, fraction), _make_shift(dimension, 100)),
        ClientProfile('client2', _scale_counts(CLIENT2_COUNTS, fraction), _make_shift(dimension, 200)),
        ClientProfile('client3-holdout', _scale_counts(holdout_counts, fraction), _make_shift(dimension, 300)),
    ]


def class_prototypes(num_classes: int, dimension: int, class_sep: float, seed: int) -> np.ndarray:
    """Get the global class means, one row per class.

    Rows are standard normal draws scaled by ``class_sep / sqrt(2 d)`` so that the
    expected distance between two prototypes is close to ``class_sep``.
    """
    rng = np.random.default_rng(seed)
    return class_sep * rng.standard_normal((num_classes, dimension)) / math.sqrt(2 * dimension)


def generate_synthetic(
    profiles: Sequence[ClientProfile],
    d: int,
    class_sep: float,
    seed: int,
    class_names: Optional[Sequence[str]] = None,
) -> List[LabeledDataset]:
    """Generate one dataset per profile around shared class prototypes.

    :param profiles: The institutions to generate
    :param d: The feature dimension (at least 2)
    :param class_sep: The expected distance between class prototypes (positive)
    :param seed: The generation seed. Each profile gets its own stream derived from it and the profile name.
    :param class_names: The class names. Defaults to the eleven cell types when there are eleven classes.
    :returns: One dataset per profile, in the same order
    :raises ValueError: on invalid dimensions or inconsistent profiles
    """
    if d < 2:
        raise DimensionError(f'dimension must be at least 2: {d}')
    if not class_sep > 0:
        raise ValueError(f'class_sep must be positive: {class_sep}')
    if not profiles:
        return []
    num_classes = len(profiles[0].class_counts)
    if any(len(profile.class_counts) != num_classes for profile in profiles):
        raise ValueError('all profiles must declare the same number of classes')
    if class_names is None:
        class_names = CLASS_NAMES if num_classes == len(CLASS_NAMES) else [f'class{i}' for i in range(num_classes)]
    if len(class_names) != num_classes:
        raise ValueError(f'{len(class_names)} class names for {num_classes} classes')

    prototypes = class_prototypes(num_classes, d, class_sep, seed)
    rv = []
    for profile in profiles:
        if len(profile.shift.scale) != d:
            raise DimensionError(f'[{profile.name}] shift has dimension {len(profile.shift.scale)}, expected {d}')
        rng = np.random.default_rng(derive_seed(seed, profile.name))
        features = np.concatenate([
            prototypes[c] + rng.standard_normal((count, d))
            for c, count in enumerate(profile.class_counts)
        ])
        labels = np.repeat(np.arange(num_classes), profile.class_counts)
        order = rng.permutation(labels.size)
        features = profile.shift.apply(features[order])
        logger.debug('[%s] generated %d samples', profile.name, labels.size)
        rv.append(LabeledDataset(features, labels[order], tuple(class_names)))
    return rv


def load_csv(path: PathLike) -> LabeledDataset:
    """Load a dataset from a CSV file.

    The first line declares the classes as ``#classes:name1,name2,...``, the second line
    is the header ``label,f1,...,fd``, and every following line is ``labelname,v1,...,vd``.

    :param path: The path to the file
    :returns: The parsed dataset
    :raises DatasetFormatError: if the file is malformed. The message names the offending line.
    """
    with open(path, encoding='utf-8') as file:
        first_line = file.readline().rstrip('\r\n')
        if not first_line.startswith(_CLASSES_PREFIX):
            raise DatasetFormatError(f'{path}:1: expected a "{_CLASSES_PREFIX}" metadata row')
        header = file.readline().rstrip('\r\n')
        if not header:
            raise DatasetFormatError(f'{path}: no samples')
        fields = header.count(',') + 1
        for line_number, line in enumerate(file, start=3):
            line = line.rstrip('\r\n')
            if line and line.count(',') + 1 != fields:
                raise DatasetFormatError(f'{path}:{line_number}: expected {fields} fields, got {line.count(",") + 1}')

    class_names = first_line[len(_CLASSES_PREFIX):].split(',')
    if not all(class_names):
        raise DatasetFormatError(f'{path}:1: empty class name')
    label_lookup = {name: i for i, name in enumerate(class_names)}

    df = pd.read_csv(
        path, skiprows=1, dtype=str, keep_default_na=False, skip_blank_lines=False, index_col=False,
        encoding='utf-8',
    ).fillna('')
    if len(df.columns) < 2 or df.columns[0] != 'label':
        raise DatasetFormatError(f'{path}:2: header must be "label,f1,...,fd"')
    # data rows start on the third line of the file
    line_numbers = np.arange(len(df)) + 3
    blank = (df == '').all(axis=1).to_numpy()
    df, line_numbers = df[~blank], line_numbers[~blank]
    if df.empty:
        raise DatasetFormatError(f'{path}: no samples')

    labels = df['label'].map(label_lookup)
    if labels.isna().any():
        row = int(np.argmax(labels.isna().to_numpy()))
        raise DatasetFormatError(f'{path}:{line_numbers[row]}: unknown label "{df["label"].iloc[row]}"')

    values = df.iloc[:, 1:]
    bad = ~np.isfinite(values.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=np.float64)).all(axis=1)
    if bad.any():
        row = int(np.argmax(bad))
        raise DatasetFormatError(f'{path}:{line_numbers[row]}: non-numeric or non-finite feature value')
    try:
        # exact parse; to_numeric above only locates bad rows
        features = values.to_numpy(dtype=str).astype(np.float64)
    except ValueError as e:
        raise DatasetFormatError(f'{path}: {e}') from None

    return LabeledDataset(features, labels.to_numpy(dtype=np.int64), tuple(class_names))


def write_csv(ds: LabeledDataset, path: PathLike) -> None:
    """Write a dataset in the format read by :func:`load_csv`, atomically."""
    for name in ds.class_names:
        if ',' in name or '\n' in name:
            raise DatasetFormatError(f'class names cannot contain commas or newlines: {name!r}')
    df = pd.DataFrame(ds.features, columns=[f'f{i + 1}' for i in range(ds.dimension)])
    df.insert(0, 'label', [ds.class_names[label] for label in ds.labels])
    body = df.to_csv(index=False)
    atomic_write_text(path, _CLASSES_PREFIX + ','.join(ds.class_names) + '\n' + body)


def split_indices(labels: Sequence[int], seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Partition sample indices into train, validation, local test, and global test.

    The three held-out buckets each get ``floor(4 n / 30)`` samples and the remainder goes
    to training. Classes with at least four samples are stratified (each bucket gets
    ``floor(4 n_c / 30)`` of them); everything else is pooled and shuffled to fill the
    buckets up to their sizes.

    :param labels: The class label of every sample
    :param seed: The shuffling seed
    :returns: Four sorted index arrays
    :raises ValueError: if there are fewer than eight samples
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if n < 8:
        raise ValueError(f'need at least 8 samples to split, got {n}')
    rng = np.random.default_rng(seed)
    target = int(n * HOLDOUT_FRACTION)  # floor for non-negative rationals
    held_out: List[List[int]] = [[], [], []]
    pool: List[int] = []
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        k = int(members.size * HOLDOUT_FRACTION) if members.size >= 4 else 0
        for i, bucket in enumerate(held_out):
            bucket.extend(members[i * k:(i + 1) * k].tolist())
        pool.extend(members[3 * k:].tolist())

    pool_array = rng.permutation(np.asarray(pool, dtype=np.int64))
    start = 0
    for bucket in held_out:
        need = target - len(bucket)
        bucket.extend(pool_array[start:start + need].tolist())
        start += need
    train = pool_array[start:]
    return (
        np.sort(train),
        np.sort(np.asarray(held_out[0], dtype=np.int64)),
        np.sort(np.asarray(held_out[1], dtype=np.int64)),
        np.sort(np.asarray(held_out[2], dtype=np.int64)),
    )


def split(ds: LabeledDataset, seed: int) -> SplitSet:
    """Split a dataset 60 / 13.33 / 13.33 / 13.33 with :func:`split_indices`."""
    train, validation, local_test, global_test = split_indices(ds.labels, seed)
    return SplitSet(
        train=ds.subset(train),
        validation=ds.subset(validation),
        local_test=ds.subset(local_test),
        global_test=ds.subset(global_test),
    )


def weighted_sampler(ds: LabeledDataset, seed: int, chunk_size: int = 1024) -> Iterator[int]:
    """Draw sample indices with replacement, inversely proportional to class frequency.

    :param ds: The dataset to sample from
    :param seed: The seed for the stream
    :param chunk_size: How many indices to draw from the generator at a time
    :yields: An endless stream of indices into the dataset
    """
    counts = ds.class_counts()
    weights = 1.0 / counts[ds.labels]
    probabilities = weights / weights.sum()
    rng = np.random.default_rng(seed)
    n = len(ds)
    while True:
        yield from rng.choice(n, size=chunk_size, replace=True, p=probabilities).tolist()


def concatenate(datasets: Iterable[LabeledDataset]) -> LabeledDataset:
    """Concatenate datasets that share the same class names."""
    datasets = list(datasets)
    if not datasets:
        raise ValueError('nothing to concatenate')
    class_names = datasets[0].class_names
    if any(ds.class_names != class_names for ds in datasets):
        raise DatasetFormatError('cannot concatenate datasets with different class names')
    return LabeledDataset(
        np.concatenate([ds.features for ds in datasets]),
        np.concatenate([ds.labels for ds in datasets]),
        class_names,
    )
