"""Point-cloud data model, file I/O and downsampling.

Positions are float32, distances and barycenters are accumulated in float64.
The binary format round-trips bit-exactly; see `save_cloud` / `load_cloud`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .seeding import rng_from

SQNC_MAGIC = b"SQNC"
SQNC_VERSION = 1
_FLAG_COLORS = 0x01
_FLAG_LABELS = 0x02


class CloudError(Exception):
    """Base class for cloud I/O and validation failures."""


class MalformedHeaderError(CloudError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class TruncatedPayloadError(CloudError):
    def __init__(self, message, record):
        super().__init__(f"{message} (record {record})")
        self.record = record


class LabelRangeError(CloudError):
    def __init__(self, message, record):
        super().__init__(f"{message} (record {record})")
        self.record = record


@dataclass
class PointCloud:
    """N points with optional per-point colors and ground-truth labels."""

    positions: np.ndarray                 # (N, 3) float32
    colors: np.ndarray | None = None      # (N, 3) uint8
    gt_labels: np.ndarray | None = None   # (N,) uint16
    num_classes: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float32)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise CloudError(f"positions must be (N, 3), got {self.positions.shape}")
        if not np.all(np.isfinite(self.positions)):
            raise CloudError("positions contain NaN/Inf")
        n = len(self.positions)
        if self.colors is not None:
            self.colors = np.ascontiguousarray(self.colors, dtype=np.uint8)
            if self.colors.shape != (n, 3):
                raise CloudError(f"colors must be ({n}, 3), got {self.colors.shape}")
        if self.gt_labels is not None:
            self.gt_labels = np.ascontiguousarray(self.gt_labels, dtype=np.uint16)
            if self.gt_labels.shape != (n,):
                raise CloudError(f"gt_labels must be ({n},), got {self.gt_labels.shape}")
            if n and int(self.gt_labels.max()) >= self.num_classes:
                raise CloudError(
                    f"label {int(self.gt_labels.max())} >= num_classes {self.num_classes}"
                )

    def __len__(self):
        return len(self.positions)

    def select(self, indices) -> "PointCloud":
        """Sub-cloud at the given point indices (order preserved)."""
        indices = np.asarray(indices, dtype=np.int64)
        return PointCloud(
            positions=self.positions[indices],
            colors=None if self.colors is None else self.colors[indices],
            gt_labels=None if self.gt_labels is None else self.gt_labels[indices],
            num_classes=self.num_classes,
        )

    def with_positions(self, positions) -> "PointCloud":
        """Same cloud with replaced coordinates (labels/colors untouched)."""
        return PointCloud(
            positions=positions,
            colors=self.colors,
            gt_labels=self.gt_labels,
            num_classes=self.num_classes,
        )


@dataclass
class GridSampleResult:
    sampled: PointCloud
    cell_size: float
    source_map: list = field(default_factory=list)  # per sampled point: source indices


def save_cloud(cloud: PointCloud, path, format="sqnc") -> None:
    """Write a cloud; the binary format is deterministic and bit-exact on reload."""
    if format == "sqnc":
        _save_sqnc(cloud, path)
    elif format == "xyz":
        _save_xyz(cloud, path)
    else:
        raise CloudError(f"unknown format {format!r}")


def load_cloud(path, format="sqnc", num_classes=None) -> PointCloud:
    if format == "sqnc":
        return _load_sqnc(path)
    if format == "xyz":
        return _load_xyz(path, num_classes=num_classes)
    raise CloudError(f"unknown format {format!r}")


def _save_sqnc(cloud: PointCloud, path) -> None:
    flags = 0
    if cloud.colors is not None:
        flags |= _FLAG_COLORS
    if cloud.gt_labels is not None:
        flags |= _FLAG_LABELS
    with open(path, "wb") as f:
        f.write(SQNC_MAGIC)
        f.write(struct.pack("<BBHQ", SQNC_VERSION, flags, cloud.num_classes, len(cloud)))
        f.write(cloud.positions.astype("<f4", copy=False).tobytes())
        if cloud.colors is not None:
            f.write(cloud.colors.tobytes())
        if cloud.gt_labels is not None:
            f.write(cloud.gt_labels.astype("<u2", copy=False).tobytes())


def _load_sqnc(path) -> PointCloud:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise MalformedHeaderError("file shorter than header", offset=len(raw))
    if raw[:4] != SQNC_MAGIC:
        raise MalformedHeaderError(f"bad magic {raw[:4]!r}", offset=0)
    version, flags, num_classes, n = struct.unpack("<BBHQ", raw[4:16])
    if version != SQNC_VERSION:
        raise MalformedHeaderError(f"unsupported version {version}", offset=4)
    off = 16

    def take(nbytes, what):
        nonlocal off
        if off + nbytes > len(raw):
            # report the first record that does not fully fit
            have = len(raw) - off
            rec_size = nbytes // max(n, 1)
            raise TruncatedPayloadError(
                f"truncated {what} payload", record=have // max(rec_size, 1)
            )
        chunk = raw[off : off + nbytes]
        off += nbytes
        return chunk

    positions = np.frombuffer(take(n * 12, "position"), dtype="<f4").reshape(n, 3)
    colors = None
    if flags & _FLAG_COLORS:
        colors = np.frombuffer(take(n * 3, "color"), dtype=np.uint8).reshape(n, 3)
    labels = None
    if flags & _FLAG_LABELS:
        labels = np.frombuffer(take(n * 2, "label"), dtype="<u2")
        if n and int(labels.max()) >= num_classes:
            bad = int(np.argmax(labels >= num_classes))
            raise LabelRangeError(
                f"label {int(labels[bad])} >= num_classes {num_classes}", record=bad
            )
    return PointCloud(
        positions=positions.copy(),
        colors=None if colors is None else colors.copy(),
        gt_labels=None if labels is None else labels.copy(),
        num_classes=num_classes,
    )


def _save_xyz(cloud: PointCloud, path) -> None:
    with open(path, "w") as f:
        for i in range(len(cloud)):
            parts = [repr(float(v)) for v in cloud.positions[i]]
            if cloud.colors is not None:
                parts += [str(int(v)) for v in cloud.colors[i]]
            if cloud.gt_labels is not None:
                parts.append(str(int(cloud.gt_labels[i])))
            f.write(" ".join(parts) + "\n")


def _load_xyz(path, num_classes=None) -> PointCloud:
    positions, colors, labels = [], [], []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) not in (3, 4, 6, 7):
                raise TruncatedPayloadError(
                    f"expected 3/4/6/7 fields, got {len(tok)} on line {lineno}",
                    record=len(positions),
                )
            if width is None:
                width = len(tok)
            elif len(tok) != width:
                raise TruncatedPayloadError(
                    f"inconsistent field count on line {lineno}", record=len(positions)
                )
            try:
                positions.append([float(tok[0]), float(tok[1]), float(tok[2])])
                if width in (6, 7):
                    colors.append([int(tok[3]), int(tok[4]), int(tok[5])])
                if width in (4, 7):
                    labels.append(int(tok[-1]))
            except ValueError as exc:
                raise MalformedHeaderError(f"unparsable line {lineno}: {exc}", offset=lineno)
    pos = np.asarray(positions, dtype=np.float32).reshape(-1, 3)
    cols = np.asarray(colors, dtype=np.uint8) if colors else None
    labs = np.asarray(labels, dtype=np.uint16) if labels else None
    if labs is not None:
        c = num_classes if num_classes is not None else (int(labs.max()) + 1 if len(labs) else 0)
        if len(labs) and int(labs.max()) >= c:
            bad = int(np.argmax(labs >= c))
            raise LabelRangeError(f"label {int(labs[bad])} >= num_classes {c}", record=bad)
    else:
        c = num_classes or 0
    return PointCloud(positions=pos, colors=cols, gt_labels=labs, num_classes=c)


def grid_cell_ids(positions, cell_size: float) -> np.ndarray:
    """Integer cell coordinates, anchored at the global origin."""
    if cell_size <= 0:
        raise CloudError(f"cell_size must be positive, got {cell_size}")
    return np.floor(positions.astype(np.float64) / float(cell_size)).astype(np.int64)


def grid_downsample(cloud: PointCloud, cell_size: float) -> GridSampleResult:
    """One point per occupied grid cell: barycenter position, majority label,
    mean color rounded half-up. Cells are ordered lexicographically."""
    cells = grid_cell_ids(cloud.positions, cell_size)
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    m = len(uniq)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(m + 1))

    source_map = [order[bounds[i] : bounds[i + 1]].copy() for i in range(m)]
    positions = np.empty((m, 3), dtype=np.float32)
    colors = np.empty((m, 3), dtype=np.uint8) if cloud.colors is not None else None
    labels = np.empty(m, dtype=np.uint16) if cloud.gt_labels is not None else None
    for i, src in enumerate(source_map):
        positions[i] = cloud.positions[src].astype(np.float64).mean(axis=0)
        if colors is not None:
            mean = cloud.colors[src].astype(np.float64).mean(axis=0)
            colors[i] = np.floor(mean + 0.5).astype(np.uint8)
        if labels is not None:
            counts = np.bincount(cloud.gt_labels[src], minlength=cloud.num_classes)
            labels[i] = int(np.argmax(counts))  # argmax ties -> smallest class id
    sampled = PointCloud(
        positions=positions, colors=colors, gt_labels=labels, num_classes=cloud.num_classes
    )
    return GridSampleResult(sampled=sampled, cell_size=float(cell_size), source_map=source_map)


def sample_count(n: int, ratio: float) -> int:
    """round(ratio * n) with Python's round-half-even, shared by all samplers."""
    return round(ratio * n)


def permutation_prefix(n: int, count: int, seed) -> np.ndarray:
    """First `count` entries of a seeded permutation of 0..n-1, sorted ascending.

    Prefixes are nested across counts for a fixed seed, which the label
    samplers rely on.
    """
    perm = rng_from(seed).permutation(n)
    return np.sort(perm[:count])


def random_downsample(cloud: PointCloud, ratio: float, seed) -> tuple[PointCloud, np.ndarray]:
    """Uniform subsample without replacement; returns (sub-cloud, source indices)."""
    if not 0 < ratio <= 1:
        raise CloudError(f"ratio must be in (0, 1], got {ratio}")
    count = sample_count(len(cloud), ratio)
    if count == 0:
        raise CloudError(f"ratio {ratio} selects zero of {len(cloud)} points")
    index_map = permutation_prefix(len(cloud), count, seed)
    return cloud.select(index_map), index_map
