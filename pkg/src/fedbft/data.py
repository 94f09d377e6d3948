"""Datasets: binary-labelled feature matrices, synthesis and plain-text IO."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .domain import Sample

__all__ = [
    "Dataset",
    "EnterpriseData",
    "two_class_gaussian",
    "split_dataset",
    "write_samples",
    "read_samples",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix x (N, n) with labels y (N,) in {-1, +1} owned by one enterprise."""

    x: np.ndarray
    y: np.ndarray
    owner: int = 0

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise ValueError("x must be a nonempty (N, n) matrix")
        if y.shape != (x.shape[0],):
            raise ValueError("y must have one label per row of x")
        if not np.isfinite(x).all():
            raise ValueError("x must be finite")
        if not np.isin(y, (-1, 1)).all():
            raise ValueError("labels must be -1 or +1")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.owner == other.owner
                and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y))

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def samples(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield Sample(self.x[i], int(self.y[i]))

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], owner: int = 0) -> "Dataset":
        if not samples:
            raise ValueError("need at least one sample")
        return cls(np.stack([s.x for s in samples]),
                   np.array([s.y for s in samples]), owner)


@dataclass(frozen=True)
class EnterpriseData:
    """One enterprise's private split: training rows plus held-back test rows."""

    train: Dataset
    test: Dataset

    def __post_init__(self) -> None:
        if self.train.dim != self.test.dim:
            raise ValueError("train and test dimensions differ")


def two_class_gaussian(
    n_samples: int,
    n_features: int,
    separation: float,
    rng: np.random.Generator,
    owner: int = 0,
) -> Dataset:
    """Balanced two-cluster data: class means at +/- separation/2 along (1,..,1)/sqrt(n).

    The two clusters are unit-variance Gaussians whose means sit
    ``separation`` apart, so a larger value makes the classes easier to
    tell apart.  Labels come out exactly balanced (odd counts give the
    extra row to class -1) and rows are shuffled with the supplied rng.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    if n_features < 1:
        raise ValueError("need at least 1 feature")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    n_pos = n_samples // 2
    n_neg = n_samples - n_pos
    mean = (separation / 2.0) * np.ones(n_features) / np.sqrt(n_features)
    x = np.vstack([
        rng.standard_normal((n_pos, n_features)) + mean,
        rng.standard_normal((n_neg, n_features)) - mean,
    ])
    y = np.concatenate([np.ones(n_pos, dtype=np.int64),
                        -np.ones(n_neg, dtype=np.int64)])
    order = rng.permutation(n_samples)
    return Dataset(x[order], y[order], owner)


def split_dataset(ds: Dataset, test_fraction: float = 0.2) -> EnterpriseData:
    """Deterministic head/tail split; the last rows become the test set."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    n_test = max(1, int(round(len(ds) * test_fraction)))
    if n_test >= len(ds):
        raise ValueError("dataset too small to split")
    cut = len(ds) - n_test
    return EnterpriseData(
        train=Dataset(ds.x[:cut], ds.y[:cut], ds.owner),
        test=Dataset(ds.x[cut:], ds.y[cut:], ds.owner),
    )


def write_samples(path: str, ds: Dataset) -> None:
    """Write one sample per line: the label then the feature values."""
    with open(path, "w", newline="\n") as fh:
        for i in range(len(ds)):
            coords = " ".join(repr(float(v)) for v in ds.x[i])
            fh.write(f"{int(ds.y[i])} {coords}\n")


def read_samples(path: str, owner: int = 0) -> Dataset:
    """Parse the plain-text samples format written by write_samples."""
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            try:
                values = [float(v) for v in parts]
            except ValueError:
                raise ValueError(f"bad number on line {lineno} of {path}") from None
            if len(values) < 2:
                raise ValueError(f"need a label and features on line {lineno} of {path}")
            label = int(values[0])
            if label not in (-1, 1) or values[0] != label:
                raise ValueError(f"label must be -1 or +1 on line {lineno} of {path}")
            labels.append(label)
            rows.append(values[1:])
    if not rows:
        raise ValueError(f"no samples in {path}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"inconsistent feature count in {path}")
    return Dataset(np.array(rows), np.array(labels), owner)
