"""Weak-supervision labels: sparse sampling, statistics, pseudo labels,
and the "SQNL v1" text file format."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, permutation_prefix, sample_count


class LabelError(Exception):
    pass


@dataclass
class SparseLabelSet:
    indices: np.ndarray   # (M,) sorted ascending, unique, all < n
    labels: np.ndarray    # (M,) class ids < num_classes
    ratio: float
    seed: int
    n: int                # size of the cloud the indices refer to
    num_classes: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.uint16)
        if len(self.indices) != len(self.labels):
            raise LabelError("indices and labels must align")
        if len(self.indices):
            if np.any(np.diff(self.indices) <= 0):
                raise LabelError("indices must be strictly increasing")
            if int(self.indices[-1]) >= self.n or int(self.indices[0]) < 0:
                raise LabelError(f"index out of range for n={self.n}")
            if int(self.labels.max()) >= self.num_classes:
                raise LabelError(f"label >= num_classes {self.num_classes}")

    def __len__(self):
        return len(self.indices)


def sample_sparse_labels(cloud: PointCloud, ratio: float, seed: int) -> SparseLabelSet:
    """Uniform without replacement, copied from ground truth. Fixed seed gives
    nested index sets across ratios (permutation-prefix sampling)."""
    if cloud.gt_labels is None:
        raise LabelError("cloud has no ground-truth labels to sample from")
    if not 0 < ratio <= 1:
        raise LabelError(f"ratio must be in (0, 1], got {ratio}")
    count = sample_count(len(cloud), ratio)
    if count == 0:
        raise LabelError(f"ratio {ratio} selects zero of {len(cloud)} points")
    indices = permutation_prefix(len(cloud), count, seed)
    return SparseLabelSet(
        indices=indices,
        labels=cloud.gt_labels[indices],
        ratio=float(ratio),
        seed=int(seed),
        n=len(cloud),
        num_classes=cloud.num_classes,
    )


def label_histogram(label_set: SparseLabelSet, num_classes: int) -> np.ndarray:
    return np.bincount(label_set.labels, minlength=num_classes).astype(np.int64)


def class_weights(label_set: SparseLabelSet, num_classes: int) -> np.ndarray:
    """Inverse-sqrt frequency weights from the sparse labels only,
    normalized to mean 1."""
    counts = label_histogram(label_set, num_classes)
    w = 1.0 / np.sqrt(counts + 1.0)
    return (w / w.mean()).astype(np.float32)


def generate_pseudo_labels(model, cloud: PointCloud,
                           sparse_labels: SparseLabelSet | None = None) -> np.ndarray:
    """Dense predicted labels; annotated points keep their true labels."""
    from .query import predict

    pseudo = predict(model, cloud).astype(np.uint16)
    if sparse_labels is not None:
        pseudo[sparse_labels.indices] = sparse_labels.labels
    return pseudo


def dense_label_set(labels: np.ndarray, num_classes: int, seed: int = 0) -> SparseLabelSet:
    """Wrap a dense label vector as a ratio-1 SparseLabelSet."""
    labels = np.asarray(labels, dtype=np.uint16)
    return SparseLabelSet(
        indices=np.arange(len(labels), dtype=np.int64),
        labels=labels,
        ratio=1.0,
        seed=int(seed),
        n=len(labels),
        num_classes=num_classes,
    )


def export_label_file(label_set: SparseLabelSet, path) -> None:
    with open(path, "w") as f:
        f.write(
            f"SQNL 1 {label_set.n} {label_set.num_classes} "
            f"{label_set.ratio!r} {label_set.seed}\n"
        )
        for i, c in zip(label_set.indices, label_set.labels):
            f.write(f"{int(i)} {int(c)}\n")


def import_label_file(path, n: int | None = None, num_classes: int | None = None) -> SparseLabelSet:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise LabelError(f"{path}: empty file, missing SQNL header")
    head = lines[0].split()
    if len(head) != 6 or head[0] != "SQNL" or head[1] != "1":
        raise LabelError(f"{path}: bad header {lines[0]!r}")
    file_n, file_c = int(head[2]), int(head[3])
    ratio, seed = float(head[4]), int(head[5])
    n = file_n if n is None else n
    num_classes = file_c if num_classes is None else num_classes
    indices, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tok = line.split()
        if len(tok) != 2:
            raise LabelError(f"{path}:{lineno}: expected '<index> <class>'")
        idx, cls = int(tok[0]), int(tok[1])
        if not 0 <= idx < n:
            raise LabelError(f"{path}:{lineno}: index {idx} out of range [0, {n})")
        if not 0 <= cls < num_classes:
            raise LabelError(f"{path}:{lineno}: class {cls} out of range [0, {num_classes})")
        indices.append(idx)
        labels.append(cls)
    return SparseLabelSet(
        indices=np.asarray(indices, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.uint16),
        ratio=ratio,
        seed=seed,
        n=n,
        num_classes=num_classes,
    )
