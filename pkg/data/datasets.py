"""
Datasets for the simulator: synthetic Gaussian blobs, CSV ingestion, and
client partitioning (IID or Dirichlet non-IID).
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
from agno.utils.log import logger

from model.split_model import Batch


class DatasetError(ValueError):
    """Raised for unreadable, malformed or empty datasets."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DatasetError(f"Features must be a matrix, got shape {self.features.shape}")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DatasetError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"Labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)

    def batch(self, indices: np.ndarray) -> Batch:
        return Batch(inputs=self.features[indices], labels=self.labels[indices])


@dataclass(frozen=True)
class PartitionPlan:
    client_indices: list[np.ndarray]
    dirichlet_alpha: float | str

    @property
    def num_clients(self) -> int:
        return len(self.client_indices)

    def sizes(self) -> list[int]:
        return [len(idx) for idx in self.client_indices]

    def validate(self, num_samples: int):
        """Check the plan is disjoint, covers every row and leaves nobody empty."""
        merged = np.concatenate(self.client_indices) if self.client_indices else np.array([], int)
        if any(len(idx) == 0 for idx in self.client_indices):
            raise DatasetError("Partition leaves a client without samples")
        if len(merged) != num_samples or len(np.unique(merged)) != num_samples:
            raise DatasetError("Partition is not a disjoint cover of the dataset")


def make_blobs(
    num_classes: int,
    dim: int,
    samples_per_class: int,
    spread: float,
    seed: int,
    separation: float = 1.0,
) -> Dataset:
    """
    Gaussian clusters around per-class means.

    Args:
        num_classes: Number of clusters/classes
        dim: Feature dimension
        samples_per_class: Rows generated per class
        spread: Standard deviation around each mean (0 puts every row on its mean)
        seed: Seed for means, noise and row order
        separation: Scale of the class means

    Returns:
        Dataset with num_classes * samples_per_class rows in shuffled order
    """
    if num_classes < 1 or dim < 1 or samples_per_class < 1:
        raise ValueError("num_classes, dim and samples_per_class must be positive")
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")

    rng = np.random.default_rng(seed)
    means = rng.standard_normal((num_classes, dim)) * separation
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    features = means[labels] + spread * rng.standard_normal((labels.size, dim))
    order = rng.permutation(labels.size)
    return Dataset(features[order], labels[order], num_classes)


def standardize(dataset: Dataset) -> Dataset:
    """Zero mean, unit variance per column; constant columns are only centered."""
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    std[std == 0] = 1.0
    return Dataset((dataset.features - mean) / std, dataset.labels, dataset.num_classes)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random held-out split; at least one row on each side."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(dataset)
    if n < 2:
        raise DatasetError("Need at least two rows to split off a test set")
    order = np.random.default_rng(seed).permutation(n)
    n_test = min(n - 1, max(1, int(round(test_fraction * n))))
    return dataset.subset(np.sort(order[n_test:])), dataset.subset(np.sort(order[:n_test]))


def partition_iid(dataset: Dataset, num_clients: int, seed: int) -> PartitionPlan:
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    if len(dataset) < num_clients:
        raise DatasetError(f"Dataset has {len(dataset)} rows, fewer than {num_clients} clients")
    order = np.random.default_rng(seed).permutation(len(dataset))
    parts = [np.sort(part) for part in np.array_split(order, num_clients)]
    return PartitionPlan(client_indices=parts, dirichlet_alpha="iid")


def partition_dirichlet(dataset: Dataset, num_clients: int, alpha: float, seed: int) -> PartitionPlan:
    """
    Non-IID split: each class is divided among clients by Dirichlet(alpha)
    proportions.

    Large alpha approaches an IID split, small alpha concentrates each class on
    few clients. A client left empty receives one row from the largest client.
    """
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if len(dataset) < num_clients:
        raise DatasetError(f"Dataset has {len(dataset)} rows, fewer than {num_clients} clients")

    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(num_clients)]
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size == 0:
            continue
        rng.shuffle(idx)
        proportions = rng.dirichlet(np.full(num_clients, alpha))
        cuts = (np.cumsum(proportions)[:-1] * idx.size).astype(int)
        for client, part in enumerate(np.split(idx, cuts)):
            buckets[client].extend(int(i) for i in part)

    for client in range(num_clients):
        if not buckets[client]:
            donor = max(range(num_clients), key=lambda m: len(buckets[m]))
            buckets[client].append(buckets[donor].pop())
            logger.debug(f"Moved one sample from client {donor} to empty client {client}")

    parts = [np.array(sorted(b), dtype=np.int64) for b in buckets]
    return PartitionPlan(client_indices=parts, dirichlet_alpha=alpha)


def _resolve_label_column(header: list[str], label_column: str | int) -> int:
    if isinstance(label_column, int):
        if not -len(header) <= label_column < len(header):
            raise DatasetError(f"Label column index {label_column} out of range")
        return label_column % len(header)
    if label_column.lstrip("-").isdigit():
        return _resolve_label_column(header, int(label_column))
    if label_column not in header:
        raise DatasetError(f"Label column '{label_column}' not in header {header}")
    return header.index(label_column)


def load_csv(
    path: str,
    label_column: str | int = -1,
    num_classes: int | None = None,
    normalize: bool = True,
) -> Dataset:
    """
    Read a comma-separated file with a header line and numeric features.

    Args:
        path: File to read
        label_column: Header name or index of the integer label column
        num_classes: Number of classes; inferred as max(label) + 1 when omitted
        normalize: Standardize the feature columns after loading

    Returns:
        Parsed Dataset
    """
    if not os.path.isfile(path):
        raise DatasetError(f"file '{path}' not found")

    logger.info(f"Loading dataset: {path}")
    features, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=",")
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"empty dataset: '{path}' has no header")
        label_idx = _resolve_label_column(header, label_column)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}:{line}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise DatasetError(f"{path}:{line}: non-numeric cell in row {row}") from None
            if not np.all(np.isfinite(values)):
                raise DatasetError(f"{path}:{line}: non-finite cell in row {row}")
            label = values.pop(label_idx)
            if label != int(label) or label < 0:
                raise DatasetError(f"{path}:{line}: label {row[label_idx]!r} is not a class index")
            if num_classes is not None and label >= num_classes:
                raise DatasetError(
                    f"{path}:{line}: label {int(label)} out of range [0, {num_classes})"
                )
            features.append(values)
            labels.append(int(label))

    if not labels:
        raise DatasetError(f"empty dataset: '{path}' has a header but no rows")

    label_array = np.array(labels, dtype=np.int64)
    dataset = Dataset(
        features=np.array(features, dtype=np.float64),
        labels=label_array,
        num_classes=num_classes if num_classes is not None else int(label_array.max()) + 1,
    )
    return standardize(dataset) if normalize else dataset


def write_csv(dataset: Dataset, path: str, label_name: str = "label"):
    """Write features and labels with full float precision (labels last)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dataset.dim)] + [label_name])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
