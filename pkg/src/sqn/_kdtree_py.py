"""Pure-NumPy k-d tree backend.

Shares the array-based tree layout with the compiled kernel (see
`build_nodes`); traversal here is interpreted Python with vectorized leaf
scans. Results are exact and identical to the compiled backend: squared
distances accumulate x, y then z in float64, ties break on the smaller
point index.
"""

from __future__ import annotations

import heapq

import numpy as np

LEAF_SIZE = 16


def build_nodes(pts64: np.ndarray, leaf_size: int = LEAF_SIZE):
    """Median-split tree over float64 points, returned as flat arrays.

    Returns (perm, split_dim, split_val, left, right, start, end); leaves
    have left == -1 and index the `perm` range [start, end).
    """
    n = len(pts64)
    perm = np.arange(n, dtype=np.int64)
    split_dim, split_val = [], []
    left, right, start, end = [], [], [], []

    def new_node():
        split_dim.append(-1)
        split_val.append(0.0)
        left.append(-1)
        right.append(-1)
        start.append(0)
        end.append(0)
        return len(split_dim) - 1

    root = new_node()
    stack = [(root, 0, n)]
    while stack:
        node, a, b = stack.pop()
        if b - a <= leaf_size:
            start[node], end[node] = a, b
            continue
        seg = perm[a:b]
        coords = pts64[seg]
        dim = int(np.argmax(coords.max(axis=0) - coords.min(axis=0)))
        vals = coords[:, dim]
        if np.all(vals == vals[0]):
            # all-duplicate segment cannot be split; keep as an oversized leaf
            start[node], end[node] = a, b
            continue
        mid = (b - a) // 2
        order = np.argpartition(vals, mid)
        perm[a:b] = seg[order]
        split_dim[node] = dim
        split_val[node] = float(pts64[perm[a + mid], dim])
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        stack.append((l, a, a + mid))
        stack.append((r, a + mid, b))

    return (
        perm,
        np.asarray(split_dim, dtype=np.int32),
        np.asarray(split_val, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(start, dtype=np.int64),
        np.asarray(end, dtype=np.int64),
    )


class PyKDTree:
    backend = "pure"

    def __init__(self, pts64: np.ndarray):
        self.pts = np.ascontiguousarray(pts64, dtype=np.float64)
        (
            self.perm,
            self.split_dim,
            self.split_val,
            self.left,
            self.right,
            self.start,
            self.end,
        ) = build_nodes(self.pts)

    def __len__(self):
        return len(self.pts)

    def _leaf_d2(self, node, q):
        seg = self.perm[self.start[node] : self.end[node]]
        diff = self.pts[seg] - q
        return seg, np.add.reduce(diff * diff, axis=1)

    def knn(self, query, k):
        q = np.asarray(query, dtype=np.float64).reshape(3)
        heap = []  # (-d2, -idx): root is the current worst under the tie rule
        stack = [(0, 0.0)]  # (node, lower bound on d2 within the subtree)
        while stack:
            node, bound = stack.pop()
            if len(heap) == k and bound > -heap[0][0]:
                continue  # strict >: equal-distance ties must still be inspected
            if self.left[node] < 0:
                seg, d2 = self._leaf_d2(node, q)
                if len(heap) == k:
                    keep = d2 <= -heap[0][0]
                    seg, d2 = seg[keep], d2[keep]
                for j in range(len(seg)):
                    entry = (-d2[j], -int(seg[j]))
                    if len(heap) < k:
                        heapq.heappush(heap, entry)
                    elif entry > heap[0]:
                        heapq.heapreplace(heap, entry)
                continue
            off = q[self.split_dim[node]] - self.split_val[node]
            near, far = (
                (self.left[node], self.right[node]) if off < 0.0
                else (self.right[node], self.left[node])
            )
            stack.append((far, max(bound, off * off)))
            stack.append((near, bound))
        pairs = sorted((-d2, -i) for d2, i in heap)
        idx = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
        dist = np.sqrt(np.fromiter((p[0] for p in pairs), dtype=np.float64, count=len(pairs)))
        return idx, dist

    def knn_batch(self, queries, k):
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        idx = np.empty((len(queries), k), dtype=np.int64)
        dist = np.empty((len(queries), k), dtype=np.float64)
        for i, q in enumerate(queries):
            idx[i], dist[i] = self.knn(q, k)
        return idx, dist

    def radius(self, query, r):
        q = np.asarray(query, dtype=np.float64).reshape(3)
        r2 = float(r) * float(r)
        found = []
        stack = [0]
        while stack:
            node = stack.pop()
            if self.left[node] < 0:
                seg, d2 = self._leaf_d2(node, q)
                found.append(seg[d2 <= r2])
                continue
            off = q[self.split_dim[node]] - self.split_val[node]
            if off < 0.0:
                stack.append(self.left[node])
                if off * off <= r2:
                    stack.append(self.right[node])
            else:
                stack.append(self.right[node])
                if off * off <= r2:
                    stack.append(self.left[node])
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(found))
