"""Dataset loading (IDX, CSV), synthetic multi-category generation,
normal-category splitting, and combination enumeration."""

from __future__ import annotations

import csv
import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FormatError, InputError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Feature matrix in [0,1] with dense category labels 0..k-1."""

    features: np.ndarray
    labels: np.ndarray
    k: int

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise InputError(f"features must be a non-empty matrix, got {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise InputError("one label per sample required")
        if not np.all(np.isfinite(feats)):
            raise InputError("non-finite feature entries")
        if feats.min() < 0.0 or feats.max() > 1.0:
            raise InputError("feature entries must lie in [0, 1]")
        if self.k < 1 or labels.min() < 0 or labels.max() >= self.k:
            raise InputError(f"labels must lie in [0, {self.k - 1}]")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def by_category(self):
        """Per-category feature subsets; their union is the dataset."""
        return {
            int(c): self.features[self.labels == c]
            for c in range(self.k)
        }


@dataclass(frozen=True)
class SplitSpec:
    """Which categories are normal and how much of each trains."""

    normal_ids: tuple[int, ...]
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        ids = tuple(int(i) for i in self.normal_ids)
        if not ids:
            raise ConfigurationError("normal_ids must be non-empty")
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate normal ids in {ids}")
        if not (0.0 < self.train_fraction <= 1.0):
            raise ConfigurationError(
                f"train_fraction must lie in (0, 1], got {self.train_fraction}"
            )
        object.__setattr__(self, "normal_ids", ids)


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian categories with means on a circle in the first two axes."""

    k: int
    d: int = 16
    radius: float = 4.0
    sigma: float = 1.0
    n_per_class: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ConfigurationError(f"k must be >= 2, got {self.k}")
        if self.d < 2:
            raise ConfigurationError(f"d must be >= 2, got {self.d}")
        if not self.sigma > 0.0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")
        if self.n_per_class < 10:
            raise ConfigurationError(
                f"n_per_class must be >= 10, got {self.n_per_class}"
            )

    def category_means(self):
        means = np.zeros((self.k, self.d))
        angles = 2.0 * np.pi * np.arange(self.k) / self.k
        means[:, 0] = self.radius * np.cos(angles)
        means[:, 1] = self.radius * np.sin(angles)
        return means


def load_idx(images_path, labels_path):
    """Read an IDX image/label file pair into a flattened [0,1] dataset."""
    with open(images_path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise FormatError(f"{images_path}: truncated image header")
    magic, n, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(
            f"{images_path}: bad image magic 0x{magic:08x}, "
            f"expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    expected = n * rows * cols
    payload = blob[16:]
    if len(payload) != expected:
        raise FormatError(
            f"{images_path}: image payload holds {len(payload)} bytes, "
            f"expected {expected}"
        )
    with open(labels_path, "rb") as fh:
        lblob = fh.read()
    if len(lblob) < 8:
        raise FormatError(f"{labels_path}: truncated label header")
    lmagic, ln = struct.unpack(">II", lblob[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise FormatError(
            f"{labels_path}: bad label magic 0x{lmagic:08x}, "
            f"expected 0x{IDX_LABELS_MAGIC:08x}"
        )
    if ln != n:
        raise FormatError(
            f"{labels_path}: label count {ln} does not match image count {n}"
        )
    lpayload = lblob[8:]
    if len(lpayload) != ln:
        raise FormatError(
            f"{labels_path}: label payload holds {len(lpayload)} bytes, expected {ln}"
        )
    features = (
        np.frombuffer(payload, dtype=np.uint8).astype(np.float64).reshape(n, rows * cols)
        / 255.0
    )
    labels = np.frombuffer(lpayload, dtype=np.uint8).astype(np.int64)
    return Dataset(features=features, labels=labels, k=int(labels.max()) + 1)


def load_csv(path):
    """Read a `label,f0,...` CSV; features are min-max scaled per column and
    labels re-indexed densely by sorted value."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if not header or header[0].strip() != "label":
            raise FormatError(f"{path}: header must start with 'label'")
        width = len(header)
        raw_labels = []
        raw_rows = []
        for i, row in enumerate(reader, start=1):
            if len(row) != width:
                raise FormatError(
                    f"{path}: row {i} has {len(row)} fields, expected {width}"
                )
            try:
                raw_labels.append(int(float(row[0])))
                raw_rows.append([float(cell) for cell in row[1:]])
            except ValueError:
                raise FormatError(f"{path}: row {i} holds a non-numeric cell") from None
    if not raw_rows:
        raise FormatError(f"{path}: no data rows")
    features = np.asarray(raw_rows, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise FormatError(f"{path}: non-finite feature value")
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    span = hi - lo
    constant = span == 0.0
    span[constant] = 1.0
    features = (features - lo) / span
    features[:, constant] = 0.0
    uniques = sorted(set(raw_labels))
    remap = {value: index for index, value in enumerate(uniques)}
    labels = np.array([remap[v] for v in raw_labels], dtype=np.int64)
    return Dataset(features=features, labels=labels, k=len(uniques))


def save_csv(dataset, path):
    """Write a dataset in the load_csv layout, full float precision."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{j}" for j in range(dataset.dim)])
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def _raw_gaussian_features(spec):
    """Unnormalized synthetic draws plus the category means used."""
    rng = np.random.default_rng(spec.seed)
    means = spec.category_means()
    blocks = []
    labels = []
    for c in range(spec.k):
        blocks.append(rng.normal(means[c], spec.sigma, size=(spec.n_per_class, spec.d)))
        labels.extend([c] * spec.n_per_class)
    return np.vstack(blocks), np.array(labels, dtype=np.int64), means


def gen_gaussian_classes(spec):
    """Isotropic Gaussian categories, globally min-max scaled into [0,1]."""
    raw, labels, _ = _raw_gaussian_features(spec)
    lo = raw.min()
    hi = raw.max()
    span = hi - lo if hi > lo else 1.0
    return Dataset(features=(raw - lo) / span, labels=labels, k=spec.k)


@dataclass(frozen=True)
class Split:
    """Per-category training sets plus a binary-labelled test pool."""

    train_by_category: dict
    test_features: np.ndarray
    test_is_anomaly: np.ndarray


def select_normal(dataset, spec):
    """Split normal categories into train/held-out and pool the rest as
    anomalies. All samples of non-normal categories go to test."""
    ids = spec.normal_ids
    for c in ids:
        if c < 0 or c >= dataset.k:
            raise ConfigurationError(f"normal category {c} absent from dataset")
    if len(set(ids)) >= dataset.k:
        raise ConfigurationError(
            "normal_ids cover every category, leaving no anomaly source"
        )
    rng = np.random.default_rng(spec.seed)
    train_by_category = {}
    test_parts = []
    test_flags = []
    for c in sorted(ids):
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size == 0:
            raise ConfigurationError(f"normal category {c} absent from dataset")
        perm = rng.permutation(rows)
        n_train = int(round(spec.train_fraction * rows.size))
        train_by_category[int(c)] = dataset.features[perm[:n_train]]
        held = perm[n_train:]
        if held.size:
            test_parts.append(dataset.features[held])
            test_flags.append(np.zeros(held.size, dtype=bool))
    normal_set = set(ids)
    for c in range(dataset.k):
        if c in normal_set:
            continue
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size:
            test_parts.append(dataset.features[rows])
            test_flags.append(np.ones(rows.size, dtype=bool))
    test_features = (
        np.vstack(test_parts) if test_parts else np.empty((0, dataset.dim))
    )
    test_is_anomaly = (
        np.concatenate(test_flags) if test_flags else np.empty(0, dtype=bool)
    )
    return Split(
        train_by_category=train_by_category,
        test_features=test_features,
        test_is_anomaly=test_is_anomaly,
    )


def enumerate_combinations(k, m):
    """All m-subsets of {0..k-1} in lexicographic order."""
    if m < 1 or k < 1:
        raise ConfigurationError(f"k and m must be positive, got k={k} m={m}")
    if m > k:
        raise ConfigurationError(f"m={m} exceeds category count k={k}")
    return [tuple(c) for c in itertools.combinations(range(k), m)]


def n_combinations(k, m):
    """Reference count C(k, m) for enumerate_combinations."""
    return math.comb(k, m)
