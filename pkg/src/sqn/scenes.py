"""Synthetic labeled room scenes.

Desk-scale stand-in for real indoor scans: a floor, perimeter walls,
furniture boxes and clutter spheres, geometrically separable but touching
(boxes rest on the floor, walls meet it), so boundary analysis has work
to do. Colors are class-correlated with heavy noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .seeding import rng_from

ARCHETYPES = ("floor", "wall", "box", "sphere")
CLASS_NAMES = {"floor": "floor", "wall": "wall", "box": "furniture", "sphere": "clutter"}

_BASE_COLORS = {
    "floor": (128, 128, 128),
    "wall": (205, 195, 170),
    "box": (120, 80, 50),
    "sphere": (60, 140, 75),
}


@dataclass
class SceneSpec:
    extent: tuple = (8.0, 8.0, 3.0)
    classes: tuple = ARCHETYPES
    points_per_class: tuple = (3000, 2200, 1700, 1100)
    density_jitter: float = 0.005
    seed: int = 0
    surface_noise: float = 0.01
    color_noise: float = 25.0

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.points_per_class = tuple(int(n) for n in self.points_per_class)
        if len(self.classes) < 1:
            raise ValueError("a scene needs at least 1 class")
        if len(self.points_per_class) != len(self.classes):
            raise ValueError("points_per_class must align with classes")
        if sum(self.points_per_class) < 512:
            raise ValueError("total points must be >= 512")
        if any(c not in ARCHETYPES for c in self.classes):
            raise ValueError(f"classes must come from {ARCHETYPES}")

    @property
    def class_names(self):
        return [CLASS_NAMES[c] for c in self.classes]


def _sample_floor(rng, n, extent):
    ex, ey, _ = extent
    pts = np.empty((n, 3))
    pts[:, 0] = rng.uniform(0, ex, n)
    pts[:, 1] = rng.uniform(0, ey, n)
    pts[:, 2] = 0.0
    return pts


def _sample_wall(rng, n, extent):
    ex, ey, ez = extent
    side = rng.integers(0, 4, n)
    t = rng.uniform(0, 1, n)
    pts = np.empty((n, 3))
    pts[:, 2] = rng.uniform(0, ez, n)
    pts[side == 0] = np.c_[t[side == 0] * ex, np.zeros((side == 0).sum()), pts[side == 0, 2]]
    pts[side == 1] = np.c_[t[side == 1] * ex, np.full((side == 1).sum(), ey), pts[side == 1, 2]]
    pts[side == 2] = np.c_[np.zeros((side == 2).sum()), t[side == 2] * ey, pts[side == 2, 2]]
    pts[side == 3] = np.c_[np.full((side == 3).sum(), ex), t[side == 3] * ey, pts[side == 3, 2]]
    return pts


def _box_surface(rng, n, center, size):
    """Uniform-ish points on the 6 faces of an axis-aligned box."""
    half = size / 2.0
    areas = np.array([size[1] * size[2], size[1] * size[2],
                      size[0] * size[2], size[0] * size[2],
                      size[0] * size[1], size[0] * size[1]])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-1, 1, n)
    v = rng.uniform(-1, 1, n)
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    for a in range(3):
        sel = axis == a
        o1, o2 = [d for d in range(3) if d != a]
        pts[sel, a] = sign[sel] * half[a]
        pts[sel, o1] = u[sel] * half[o1]
        pts[sel, o2] = v[sel] * half[o2]
    return pts + center


def _sample_boxes(rng, n, extent):
    ex, ey, _ = extent
    n_boxes = 3
    counts = np.full(n_boxes, n // n_boxes)
    counts[: n % n_boxes] += 1
    pts = []
    for c in counts:
        size = rng.uniform([0.5, 0.5, 0.5], [1.3, 1.3, 1.1])
        center = np.array([
            rng.uniform(1.2, ex - 1.2),
            rng.uniform(1.2, ey - 1.2),
            size[2] / 2.0,  # resting on the floor
        ])
        pts.append(_box_surface(rng, int(c), center, size))
    return np.concatenate(pts, axis=0)


def _sample_spheres(rng, n, extent):
    ex, ey, _ = extent
    n_spheres = 5
    counts = np.full(n_spheres, n // n_spheres)
    counts[: n % n_spheres] += 1
    pts = []
    for c in counts:
        r = rng.uniform(0.18, 0.42)
        center = np.array([rng.uniform(0.8, ex - 0.8), rng.uniform(0.8, ey - 0.8), r])
        direction = rng.normal(size=(int(c), 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        pts.append(center + r * direction)
    return np.concatenate(pts, axis=0)


_SAMPLERS = {
    "floor": _sample_floor,
    "wall": _sample_wall,
    "box": _sample_boxes,
    "sphere": _sample_spheres,
}


def synth_scene(spec: SceneSpec) -> PointCloud:
    """Deterministic labeled cloud for the given spec."""
    rng = rng_from(spec.seed, "scene")
    positions, labels, colors = [], [], []
    for cls_id, (archetype, base_n) in enumerate(zip(spec.classes, spec.points_per_class)):
        jitter = rng.uniform(-spec.density_jitter, spec.density_jitter)
        n = max(1, int(round(base_n * (1.0 + jitter))))
        pts = _SAMPLERS[archetype](rng, n, spec.extent)
        pts = pts + rng.normal(0.0, spec.surface_noise, pts.shape)
        positions.append(pts)
        labels.append(np.full(n, cls_id, dtype=np.uint16))
        base = np.array(_BASE_COLORS[archetype], dtype=np.float64)
        noisy = base + rng.normal(0.0, spec.color_noise, (n, 3))
        colors.append(np.clip(noisy, 0, 255).astype(np.uint8))
    return PointCloud(
        positions=np.concatenate(positions).astype(np.float32),
        colors=np.concatenate(colors),
        gt_labels=np.concatenate(labels),
        num_classes=len(spec.classes),
    )
