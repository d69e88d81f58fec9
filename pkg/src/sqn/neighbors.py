"""Exact K-NN / radius search over a fixed point set.

Two interchangeable backends: a compiled k-d tree kernel (sqn._kdtree,
built from Cython) and a pure-NumPy fallback. The compiled one is picked
at import when available; set SQN_PURE_KNN=1 to force the fallback.
Both are exact and return identical results: float64 distances computed
from the float32 coordinates, ties broken by the smaller point index.
"""

from __future__ import annotations

import os

import numpy as np

from ._kdtree_py import PyKDTree, build_nodes

if os.environ.get("SQN_PURE_KNN"):
    _compiled = None
else:
    try:
        from . import _kdtree as _compiled
    except ImportError:
        _compiled = None

ACTIVE_BACKEND = "pure" if _compiled is None else "compiled"


class SpatialIndex:
    """Immutable exact nearest-neighbor index; safe for concurrent queries."""

    def __init__(self, positions, backend=None):
        positions = np.asarray(positions, dtype=np.float32).reshape(-1, 3)
        if len(positions) == 0:
            raise ValueError("cannot index an empty point set")
        if not np.all(np.isfinite(positions)):
            raise ValueError("positions contain NaN/Inf")
        self.positions = positions
        pts64 = positions.astype(np.float64)
        backend = backend or ACTIVE_BACKEND
        if backend == "compiled":
            if _compiled is None:
                raise ValueError("compiled backend unavailable")
            self._tree = _compiled.CKDTree(pts64, *build_nodes(pts64))
        elif backend == "pure":
            self._tree = PyKDTree(pts64)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend

    def __len__(self):
        return len(self.positions)

    def knn(self, query_xyz, k: int):
        """k nearest (indices, distances), ascending by (distance, index)."""
        self._check_k(k)
        return self._tree.knn(np.asarray(query_xyz, dtype=np.float32), k)

    def knn_batch(self, queries, k: int):
        """Row-per-query K-NN; results in input order."""
        self._check_k(k)
        queries = np.asarray(queries, dtype=np.float32).reshape(-1, 3)
        return self._tree.knn_batch(queries, k)

    def radius(self, query_xyz, r: float):
        """All indices within distance r, sorted ascending."""
        if r <= 0:
            raise ValueError(f"radius must be positive, got {r}")
        return self._tree.radius(np.asarray(query_xyz, dtype=np.float32), float(r))

    def _check_k(self, k):
        if not 1 <= k <= len(self):
            raise ValueError(f"k={k} out of range [1, {len(self)}]")


def build_index(positions, backend=None) -> SpatialIndex:
    return SpatialIndex(positions, backend=backend)


def knn(index: SpatialIndex, query_xyz, k: int):
    """Spec-shaped result: list of (point_index, distance) pairs."""
    idx, dist = index.knn(query_xyz, k)
    return list(zip(idx.tolist(), dist.tolist()))


def radius_neighbors(index: SpatialIndex, query_xyz, r: float):
    return index.radius(query_xyz, r)
