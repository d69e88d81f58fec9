# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled k-d tree traversal.

Consumes the node arrays produced by sqn._kdtree_py.build_nodes, so both
backends search the identical tree. All distance math is float64 with
ties broken on the smaller point index, matching the pure backend bit for
bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

DEF MAX_STACK = 512


cdef inline bint _worse(double ad, long long ai, double bd, long long bi) nogil:
    # "a is a worse neighbor than b" under the (distance, index) order
    if ad > bd:
        return True
    return ad == bd and ai > bi


cdef inline void _sift_up(double* hd, long long* hi, int pos) nogil:
    cdef int parent
    cdef double d
    cdef long long i
    while pos > 0:
        parent = (pos - 1) >> 1
        if _worse(hd[pos], hi[pos], hd[parent], hi[parent]):
            d = hd[pos]; hd[pos] = hd[parent]; hd[parent] = d
            i = hi[pos]; hi[pos] = hi[parent]; hi[parent] = i
            pos = parent
        else:
            return


cdef inline void _sift_down(double* hd, long long* hi, int size) nogil:
    cdef int pos = 0, child
    cdef double d
    cdef long long i
    while True:
        child = 2 * pos + 1
        if child >= size:
            return
        if child + 1 < size and _worse(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if _worse(hd[child], hi[child], hd[pos], hi[pos]):
            d = hd[pos]; hd[pos] = hd[child]; hd[child] = d
            i = hi[pos]; hi[pos] = hi[child]; hi[child] = i
            pos = child
        else:
            return


cdef class CKDTree:
    cdef double[:, ::1] pts
    cdef long long[::1] perm
    cdef int[::1] split_dim
    cdef double[::1] split_val
    cdef int[::1] left
    cdef int[::1] right
    cdef long long[::1] start
    cdef long long[::1] end

    backend = "compiled"

    def __init__(self, pts64, perm, split_dim, split_val, left, right, start, end):
        self.pts = np.ascontiguousarray(pts64, dtype=np.float64)
        self.perm = np.ascontiguousarray(perm, dtype=np.int64)
        self.split_dim = np.ascontiguousarray(split_dim, dtype=np.int32)
        self.split_val = np.ascontiguousarray(split_val, dtype=np.float64)
        self.left = np.ascontiguousarray(left, dtype=np.int32)
        self.right = np.ascontiguousarray(right, dtype=np.int32)
        self.start = np.ascontiguousarray(start, dtype=np.int64)
        self.end = np.ascontiguousarray(end, dtype=np.int64)

    def __len__(self):
        return self.pts.shape[0]

    cdef int _knn_one(self, double qx, double qy, double qz, int k,
                      double* hd, long long* hi,
                      long long* out_idx, double* out_dist) nogil:
        cdef int node_stack[MAX_STACK]
        cdef double bound_stack[MAX_STACK]
        cdef int sp = 0, hsize = 0, node, dim, near, far
        cdef long long t, i
        cdef double bound, off, dx, dy, dz, d2

        node_stack[0] = 0
        bound_stack[0] = 0.0
        sp = 1
        while sp > 0:
            sp -= 1
            node = node_stack[sp]
            bound = bound_stack[sp]
            if hsize == k and bound > hd[0]:
                continue
            if self.left[node] < 0:
                for t in range(self.start[node], self.end[node]):
                    i = self.perm[t]
                    dx = qx - self.pts[i, 0]
                    dy = qy - self.pts[i, 1]
                    dz = qz - self.pts[i, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if hsize < k:
                        hd[hsize] = d2
                        hi[hsize] = i
                        hsize += 1
                        _sift_up(hd, hi, hsize - 1)
                    elif _worse(hd[0], hi[0], d2, i):
                        hd[0] = d2
                        hi[0] = i
                        _sift_down(hd, hi, hsize)
                continue
            dim = self.split_dim[node]
            if dim == 0:
                off = qx - self.split_val[node]
            elif dim == 1:
                off = qy - self.split_val[node]
            else:
                off = qz - self.split_val[node]
            if off < 0.0:
                near = self.left[node]; far = self.right[node]
            else:
                near = self.right[node]; far = self.left[node]
            node_stack[sp] = far
            bound_stack[sp] = bound if bound > off * off else off * off
            sp += 1
            node_stack[sp] = near
            bound_stack[sp] = bound
            sp += 1

        # heap-extract worst-first into the tail: ascending (d2, index) order
        cdef int m = hsize, pos
        cdef double d
        for pos in range(m - 1, -1, -1):
            out_idx[pos] = hi[0]
            out_dist[pos] = sqrt(hd[0])
            hsize -= 1
            hd[0] = hd[hsize]
            hi[0] = hi[hsize]
            _sift_down(hd, hi, hsize)
        return m

    def knn(self, query, int k):
        q = np.asarray(query, dtype=np.float64).reshape(3)
        idx = np.empty(k, dtype=np.int64)
        dist = np.empty(k, dtype=np.float64)
        heap_d = np.empty(k, dtype=np.float64)
        heap_i = np.empty(k, dtype=np.int64)
        cdef double[::1] qv = q
        cdef long long[::1] iv = idx
        cdef double[::1] dv = dist
        cdef double[::1] hd = heap_d
        cdef long long[::1] hi = heap_i
        self._knn_one(qv[0], qv[1], qv[2], k, &hd[0], &hi[0], &iv[0], &dv[0])
        return idx, dist

    def knn_batch(self, queries, int k):
        cdef double[:, ::1] qs = np.ascontiguousarray(
            np.asarray(queries, dtype=np.float64).reshape(-1, 3))
        cdef Py_ssize_t nq = qs.shape[0], j
        idx = np.empty((nq, k), dtype=np.int64)
        dist = np.empty((nq, k), dtype=np.float64)
        heap_d = np.empty(k, dtype=np.float64)
        heap_i = np.empty(k, dtype=np.int64)
        cdef long long[:, ::1] iv = idx
        cdef double[:, ::1] dv = dist
        cdef double[::1] hd = heap_d
        cdef long long[::1] hi = heap_i
        with nogil:
            for j in range(nq):
                self._knn_one(qs[j, 0], qs[j, 1], qs[j, 2], k,
                              &hd[0], &hi[0], &iv[j, 0], &dv[j, 0])
        return idx, dist

    def radius(self, query, double r):
        q = np.asarray(query, dtype=np.float64).reshape(3)
        cdef double qx = q[0], qy = q[1], qz = q[2]
        cdef double r2 = r * r
        cdef int node_stack[MAX_STACK]
        cdef int sp = 1, node, dim
        cdef long long t, i, found = 0
        cdef double off, dx, dy, dz, d2
        buf = np.empty(64, dtype=np.int64)
        cdef long long[::1] bv = buf

        node_stack[0] = 0
        while sp > 0:
            sp -= 1
            node = node_stack[sp]
            if self.left[node] < 0:
                for t in range(self.start[node], self.end[node]):
                    i = self.perm[t]
                    dx = qx - self.pts[i, 0]
                    dy = qy - self.pts[i, 1]
                    dz = qz - self.pts[i, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 <= r2:
                        if found == bv.shape[0]:
                            buf = np.concatenate([buf, np.empty_like(buf)])
                            bv = buf
                        bv[found] = i
                        found += 1
                continue
            dim = self.split_dim[node]
            if dim == 0:
                off = qx - self.split_val[node]
            elif dim == 1:
                off = qy - self.split_val[node]
            else:
                off = qz - self.split_val[node]
            if off < 0.0:
                node_stack[sp] = self.left[node]; sp += 1
                if off * off <= r2:
                    node_stack[sp] = self.right[node]; sp += 1
            else:
                node_stack[sp] = self.right[node]; sp += 1
                if off * off <= r2:
                    node_stack[sp] = self.left[node]; sp += 1

        return np.sort(buf[:found])
