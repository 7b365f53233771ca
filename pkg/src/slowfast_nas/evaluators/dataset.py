"""Synthetic class-conditional Gaussian classification data.

Desk-scale stand-in for an image benchmark: each class is a unit-covariance
Gaussian around a fixed random mean of norm 2, so a linear model already
separates classes well and one-epoch training signals are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import named_rng

SEPARATION = 2.0


@dataclass(frozen=True)
class DatasetSplit:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    classes: int
    # positions in the generation pool, kept so disjointness is checkable
    train_indices: np.ndarray
    val_indices: np.ndarray

    def __post_init__(self):
        if set(self.train_indices) & set(self.val_indices):
            raise ValueError("train and validation splits overlap")
        for y, size in ((self.train_y, len(self.train_y)), (self.val_y, len(self.val_y))):
            counts = np.bincount(y, minlength=self.classes)
            if counts.max() - counts.min() > 1:
                raise ValueError("class counts are not balanced within 1")


def _per_class_counts(size: int, classes: int) -> np.ndarray:
    counts = np.full(classes, size // classes, dtype=int)
    counts[: size % classes] += 1
    return counts


def make_synthetic_dataset(
    seed: int,
    classes: int = 4,
    dim: int = 16,
    train_size: int = 2048,
    val_size: int = 512,
) -> DatasetSplit:
    """Draw both splits from per-class Gaussians with fixed random means."""
    if classes < 2:
        raise ValueError("need at least 2 classes")
    rng = named_rng(seed, "dataset")
    means = rng.normal(size=(classes, dim))
    means *= SEPARATION / np.linalg.norm(means, axis=1, keepdims=True)

    train_counts = _per_class_counts(train_size, classes)
    val_counts = _per_class_counts(val_size, classes)

    pool_x, pool_y = [], []
    train_idx, val_idx = [], []
    offset = 0
    for c in range(classes):
        total = train_counts[c] + val_counts[c]
        pool_x.append(means[c] + rng.normal(size=(total, dim)))
        pool_y.append(np.full(total, c, dtype=int))
        train_idx.extend(range(offset, offset + train_counts[c]))
        val_idx.extend(range(offset + train_counts[c], offset + total))
        offset += total

    x = np.concatenate(pool_x)
    y = np.concatenate(pool_y)
    train_idx = np.array(train_idx)
    val_idx = np.array(val_idx)
    train_order = rng.permutation(len(train_idx))
    val_order = rng.permutation(len(val_idx))
    train_idx = train_idx[train_order]
    val_idx = val_idx[val_order]
    return DatasetSplit(
        train_x=x[train_idx],
        train_y=y[train_idx],
        val_x=x[val_idx],
        val_y=y[val_idx],
        classes=classes,
        train_indices=train_idx,
        val_indices=val_idx,
    )
