"""Pure-Python kd-tree with the same interface as the compiled ``_kdtree`` module.

Used when the extension is not built (or ``KNNKL_PURE_PYTHON=1``). Leaf scans
are vectorized with numpy; traversal is plain Python, so expect it to be one to
two orders of magnitude slower than the compiled core.
"""

from __future__ import annotations

import heapq

import numpy as np


def reduced_distances(points: np.ndarray, query: np.ndarray, chebyshev: bool) -> np.ndarray:
    """Squared Euclidean or Chebyshev distances, accumulated in coordinate order."""
    if chebyshev:
        acc = np.abs(points[:, 0] - query[0])
        for j in range(1, points.shape[1]):
            np.maximum(acc, np.abs(points[:, j] - query[j]), out=acc)
        return acc
    diff = points[:, 0] - query[0]
    acc = diff * diff
    for j in range(1, points.shape[1]):
        diff = points[:, j] - query[j]
        acc += diff * diff
    return acc


class _Node:
    __slots__ = ("start", "end", "lo", "hi", "left", "right")

    def __init__(self, start, end, lo, hi):
        self.start = start
        self.end = end
        self.lo = lo
        self.hi = hi
        self.left = None
        self.right = None


class KDTree:
    def __init__(self, data, chebyshev: bool = False, leafsize: int = 16):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("data must be a non-empty (n, d) array")
        if leafsize < 1:
            raise ValueError("leafsize must be >= 1")
        arr.setflags(write=False)
        self.data = arr
        self.n, self.d = arr.shape
        self.leafsize = int(leafsize)
        self.chebyshev = bool(chebyshev)
        self._perm = np.arange(self.n, dtype=np.intp)
        self.n_nodes = 0
        self._root = self._build(0, self.n)
        # leaf blocks stored contiguously in tree order
        self._sorted = np.ascontiguousarray(arr[self._perm])

    def _build(self, start, end):
        pts = self.data[self._perm[start:end]]
        node = _Node(start, end, pts.min(axis=0), pts.max(axis=0))
        self.n_nodes += 1
        if end - start <= self.leafsize:
            return node
        spread = node.hi - node.lo
        dim = int(np.argmax(spread))
        if spread[dim] <= 0.0:
            return node
        mid = start + (end - start) // 2
        order = np.argpartition(pts[:, dim], mid - start, kind="introselect")
        self._perm[start:end] = self._perm[start:end][order]
        node.left = self._build(start, mid)
        node.right = self._build(mid, end)
        return node

    def _box_dist(self, node, q):
        gap = np.maximum(np.maximum(node.lo - q, q - node.hi), 0.0)
        if self.chebyshev:
            return float(gap.max())
        acc = 0.0
        for g in gap:
            acc += g * g
        return acc

    def kth_distances(self, queries, k: int, exclude=None) -> np.ndarray:
        qs = np.ascontiguousarray(queries, dtype=np.float64)
        if qs.ndim != 2 or qs.shape[1] != self.d:
            raise ValueError(f"query dimension {qs.shape[-1]} != index dimension {self.d}")
        nq = qs.shape[0]
        if exclude is None:
            ex = np.full(nq, -1, dtype=np.intp)
        else:
            ex = np.asarray(exclude, dtype=np.intp)
            if ex.shape != (nq,):
                raise ValueError("exclude must have one entry per query")
        for e in np.unique(ex):
            avail = self.n - (1 if 0 <= e < self.n else 0)
            if k < 1 or k > avail:
                raise ValueError(f"k={k} out of range: {avail} candidate points")
        out = np.empty(nq, dtype=np.float64)
        for qi in range(nq):
            out[qi] = self._query_one(qs[qi], k, int(ex[qi]))
        return out

    def _query_one(self, q, k, exclude):
        best = []  # max-heap via negation
        stack = [(self._box_dist(self._root, q), self._root)]
        while stack:
            bd, node = stack.pop()
            if len(best) == k and bd >= -best[0]:
                continue
            if node.left is None:
                dist = reduced_distances(self._sorted[node.start:node.end], q, self.chebyshev)
                rows = self._perm[node.start:node.end]
                for r, dv in zip(rows.tolist(), dist.tolist()):
                    if r == exclude:
                        continue
                    if len(best) < k:
                        heapq.heappush(best, -dv)
                    elif dv < -best[0]:
                        heapq.heapreplace(best, -dv)
                continue
            da = self._box_dist(node.left, q)
            db = self._box_dist(node.right, q)
            if da <= db:
                stack.append((db, node.right))
                stack.append((da, node.left))
            else:
                stack.append((da, node.left))
                stack.append((db, node.right))
        kth = -best[0]
        return kth if self.chebyshev else float(np.sqrt(kth))
