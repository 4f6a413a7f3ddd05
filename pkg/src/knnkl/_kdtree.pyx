# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kd-tree for exact k-th nearest-neighbor distances.

Distances are accumulated coordinate by coordinate in index order, exactly as
the pure-Python fallback and the brute-force oracle do, so all three agree
bit-for-bit.
"""

import numpy as np

from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free


cdef inline double _point_dist(const double[:, ::1] data, Py_ssize_t row,
                               const double[:, ::1] queries, Py_ssize_t q,
                               Py_ssize_t d, bint chebyshev) noexcept nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0, diff
    if chebyshev:
        for j in range(d):
            diff = fabs(data[row, j] - queries[q, j])
            if diff > acc:
                acc = diff
    else:
        for j in range(d):
            diff = data[row, j] - queries[q, j]
            acc += diff * diff
    return acc


cdef inline double _box_dist(const double[:, ::1] lo, const double[:, ::1] hi,
                             Py_ssize_t node, const double[:, ::1] queries,
                             Py_ssize_t q, Py_ssize_t d, bint chebyshev) noexcept nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0, gap, x
    for j in range(d):
        x = queries[q, j]
        if x < lo[node, j]:
            gap = lo[node, j] - x
        elif x > hi[node, j]:
            gap = x - hi[node, j]
        else:
            continue
        if chebyshev:
            if gap > acc:
                acc = gap
        else:
            acc += gap * gap
    return acc


cdef inline void _sift_down(double* heap, Py_ssize_t size) noexcept nogil:
    # max-heap; heap[0] was just replaced
    cdef Py_ssize_t i = 0, child
    cdef double tmp
    while True:
        child = 2 * i + 1
        if child >= size:
            break
        if child + 1 < size and heap[child + 1] > heap[child]:
            child += 1
        if heap[child] <= heap[i]:
            break
        tmp = heap[i]
        heap[i] = heap[child]
        heap[child] = tmp
        i = child


cdef inline void _sift_up(double* heap, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t parent
    cdef double tmp
    while i > 0:
        parent = (i - 1) // 2
        if heap[parent] >= heap[i]:
            break
        tmp = heap[i]
        heap[i] = heap[parent]
        heap[parent] = tmp
        i = parent


cdef class KDTree:
    """Static kd-tree with tight per-node bounding boxes.

    Nodes split the widest box dimension at the median; leaves hold at most
    `leafsize` points.
    """

    cdef readonly object data
    cdef readonly Py_ssize_t n, d, leafsize, n_nodes
    cdef readonly bint chebyshev
    cdef const double[:, ::1] _data
    cdef Py_ssize_t[::1] _perm
    cdef Py_ssize_t[::1] _start, _end, _left, _right
    cdef double[:, ::1] _lo, _hi
    cdef Py_ssize_t _max_depth

    def __init__(self, data, bint chebyshev=False, Py_ssize_t leafsize=16):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("data must be a non-empty (n, d) array")
        if leafsize < 1:
            raise ValueError("leafsize must be >= 1")
        arr.setflags(write=False)
        self.data = arr
        self._data = arr
        self.n = arr.shape[0]
        self.d = arr.shape[1]
        self.leafsize = leafsize
        self.chebyshev = chebyshev

        cdef Py_ssize_t min_leaf = max(1, (leafsize + 1) // 2)
        cdef Py_ssize_t cap = 2 * (self.n // min_leaf) + 1
        self._perm = np.arange(self.n, dtype=np.intp)
        self._start = np.empty(cap, dtype=np.intp)
        self._end = np.empty(cap, dtype=np.intp)
        self._left = np.empty(cap, dtype=np.intp)
        self._right = np.empty(cap, dtype=np.intp)
        self._lo = np.empty((cap, self.d), dtype=np.float64)
        self._hi = np.empty((cap, self.d), dtype=np.float64)
        self.n_nodes = 0
        self._max_depth = 0
        with nogil:
            self._build(0, self.n, 0)

    cdef Py_ssize_t _build(self, Py_ssize_t start, Py_ssize_t end, Py_ssize_t depth) noexcept nogil:
        cdef Py_ssize_t node = self.n_nodes
        cdef Py_ssize_t i, j, row, split_dim = 0, mid
        cdef double v, spread, best = -1.0
        self.n_nodes += 1
        if depth > self._max_depth:
            self._max_depth = depth
        self._start[node] = start
        self._end[node] = end
        self._left[node] = -1
        self._right[node] = -1
        for j in range(self.d):
            self._lo[node, j] = self._data[self._perm[start], j]
            self._hi[node, j] = self._data[self._perm[start], j]
        for i in range(start + 1, end):
            row = self._perm[i]
            for j in range(self.d):
                v = self._data[row, j]
                if v < self._lo[node, j]:
                    self._lo[node, j] = v
                elif v > self._hi[node, j]:
                    self._hi[node, j] = v
        if end - start <= self.leafsize:
            return node
        for j in range(self.d):
            spread = self._hi[node, j] - self._lo[node, j]
            if spread > best:
                best = spread
                split_dim = j
        if best <= 0.0:
            # all points identical: keep as one (oversized) leaf
            return node
        mid = start + (end - start) // 2
        self._select(start, end, mid, split_dim)
        self._left[node] = self._build(start, mid, depth + 1)
        self._right[node] = self._build(mid, end, depth + 1)
        return node

    cdef void _select(self, Py_ssize_t lo, Py_ssize_t hi, Py_ssize_t kth, Py_ssize_t dim) noexcept nogil:
        # Hoare quickselect on _perm[lo:hi] keyed by coordinate `dim`
        cdef Py_ssize_t left = lo, right = hi - 1, i, j, tmp
        cdef double pivot
        while right > left:
            pivot = self._data[self._perm[(left + right) // 2], dim]
            i = left
            j = right
            while i <= j:
                while self._data[self._perm[i], dim] < pivot:
                    i += 1
                while self._data[self._perm[j], dim] > pivot:
                    j -= 1
                if i <= j:
                    tmp = self._perm[i]
                    self._perm[i] = self._perm[j]
                    self._perm[j] = tmp
                    i += 1
                    j -= 1
            if kth <= j:
                right = j
            elif kth >= i:
                left = i
            else:
                break

    def kth_distances(self, queries, Py_ssize_t k, exclude=None):
        """k-th smallest distance from each query row to the stored points.

        `exclude[q]` (if given and >= 0) removes that stored point from the
        candidate set of query q.
        """
        cdef const double[:, ::1] qv = np.ascontiguousarray(queries, dtype=np.float64)
        cdef Py_ssize_t nq = qv.shape[0]
        if qv.shape[1] != self.d:
            raise ValueError(f"query dimension {qv.shape[1]} != index dimension {self.d}")
        if exclude is None:
            ex_arr = np.full(nq, -1, dtype=np.intp)
        else:
            ex_arr = np.ascontiguousarray(exclude, dtype=np.intp)
            if ex_arr.shape[0] != nq:
                raise ValueError("exclude must have one entry per query")
        cdef const Py_ssize_t[::1] ex = ex_arr
        cdef Py_ssize_t q, avail
        for q in range(nq):
            avail = self.n - (1 if 0 <= ex[q] < self.n else 0)
            if k < 1 or k > avail:
                raise ValueError(f"k={k} out of range: {avail} candidate points")
        out = np.empty(nq, dtype=np.float64)
        cdef double[::1] ov = out
        cdef Py_ssize_t stack_cap = 2 * (self._max_depth + 2)
        cdef double* heap = <double*> malloc(k * sizeof(double))
        cdef Py_ssize_t* stack = <Py_ssize_t*> malloc(stack_cap * sizeof(Py_ssize_t))
        cdef double* stack_d = <double*> malloc(stack_cap * sizeof(double))
        if heap == NULL or stack == NULL or stack_d == NULL:
            free(heap)
            free(stack)
            free(stack_d)
            raise MemoryError()
        try:
            with nogil:
                for q in range(nq):
                    ov[q] = self._query_one(qv, q, k, ex[q], heap, stack, stack_d)
        finally:
            free(heap)
            free(stack)
            free(stack_d)
        return out

    cdef double _query_one(self, const double[:, ::1] qv, Py_ssize_t q, Py_ssize_t k,
                           Py_ssize_t exclude, double* heap, Py_ssize_t* stack,
                           double* stack_d) noexcept nogil:
        cdef Py_ssize_t count = 0, top = 0, node, i, row, a, b
        cdef double bd, dist, da, db
        stack[0] = 0
        stack_d[0] = _box_dist(self._lo, self._hi, 0, qv, q, self.d, self.chebyshev)
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            bd = stack_d[top]
            if count == k and bd >= heap[0]:
                continue
            if self._left[node] < 0:
                for i in range(self._start[node], self._end[node]):
                    row = self._perm[i]
                    if row == exclude:
                        continue
                    dist = _point_dist(self._data, row, qv, q, self.d, self.chebyshev)
                    if count < k:
                        heap[count] = dist
                        _sift_up(heap, count)
                        count += 1
                    elif dist < heap[0]:
                        heap[0] = dist
                        _sift_down(heap, k)
                continue
            a = self._left[node]
            b = self._right[node]
            da = _box_dist(self._lo, self._hi, a, qv, q, self.d, self.chebyshev)
            db = _box_dist(self._lo, self._hi, b, qv, q, self.d, self.chebyshev)
            # push the farther child first so the nearer one is explored next
            if da <= db:
                stack[top] = b
                stack_d[top] = db
                stack[top + 1] = a
                stack_d[top + 1] = da
            else:
                stack[top] = a
                stack_d[top] = da
                stack[top + 1] = b
                stack_d[top + 1] = db
            top += 2
        if self.chebyshev:
            return heap[0]
        return sqrt(heap[0])
