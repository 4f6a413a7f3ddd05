"""Exact k-th nearest-neighbor distance queries.

A built :class:`NeighborIndex` wraps a static kd-tree. The compiled tree from
``knnkl._kdtree`` is used when importable; otherwise (or when the environment
variable ``KNNKL_PURE_PYTHON`` is set) the pure-Python tree is used. Both return
the same bits as :func:`brute_force_kth_distance`.

Ties among equidistant neighbors are ranked arbitrarily; only the k-th
distance value is returned, and it does not depend on the tie order.
"""

from __future__ import annotations

import os

import numpy as np

from knnkl import _kdtree_py
from knnkl._kdtree_py import reduced_distances
from knnkl.special import Norm

try:
    from knnkl import _kdtree as _compiled
except ImportError:  # extension not built
    _compiled = None

__all__ = [
    "BACKENDS",
    "DEFAULT_BACKEND",
    "NeighborIndex",
    "as_samples",
    "brute_force_kth_distance",
    "brute_force_kth_distances",
    "build_index",
    "kth_neighbor_distance",
]

BACKENDS = {"python": _kdtree_py.KDTree}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.KDTree

if os.environ.get("KNNKL_PURE_PYTHON") or _compiled is None:
    DEFAULT_BACKEND = "python"
else:
    DEFAULT_BACKEND = "compiled"

DEFAULT_LEAFSIZE = 16


def as_samples(points, name: str = "samples") -> np.ndarray:
    """Validate a sample set and return it as a C-contiguous (N, d) float64 array.

    A 1-d input is read as N scalar samples (d = 1).
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be an (N, d) array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} is empty")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} has zero dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return np.ascontiguousarray(arr)


def _as_point(query, d: int) -> np.ndarray:
    q = np.atleast_1d(np.asarray(query, dtype=np.float64))
    if q.shape != (d,):
        raise ValueError(f"query must have dimension {d}, got shape {q.shape}")
    return q


def _check_k(k, n: int, exclude) -> int:
    if isinstance(k, bool) or int(k) != k:
        raise ValueError(f"k must be an integer, got {k!r}")
    k = int(k)
    avail = n - (exclude is not None)
    if not 1 <= k <= avail:
        raise ValueError(f"k={k} out of range: {avail} candidate points")
    return k


def _check_exclude(exclude, n: int):
    if exclude is None:
        return None
    if int(exclude) != exclude or not 0 <= exclude < n:
        raise ValueError(f"exclude index {exclude!r} outside [0, {n})")
    return int(exclude)


class NeighborIndex:
    """Immutable index over a sample set; safe for concurrent readers."""

    def __init__(self, samples, norm: Norm | str = Norm.EUCLIDEAN,
                 leafsize: int = DEFAULT_LEAFSIZE, backend: str | None = None):
        self.norm = Norm.parse(norm)
        self.backend = backend or DEFAULT_BACKEND
        try:
            tree_cls = BACKENDS[self.backend]
        except KeyError:
            raise ValueError(f"unknown or unavailable backend {self.backend!r}") from None
        self._tree = tree_cls(as_samples(samples), self.norm is Norm.CHEBYSHEV, leafsize)

    @property
    def points(self) -> np.ndarray:
        return self._tree.data

    @property
    def n(self) -> int:
        return self._tree.n

    @property
    def d(self) -> int:
        return self._tree.d

    def kth_distance(self, query, k: int, exclude: int | None = None) -> float:
        exclude = _check_exclude(exclude, self.n)
        k = _check_k(k, self.n, exclude)
        q = _as_point(query, self.d)[None, :]
        ex = None if exclude is None else np.array([exclude], dtype=np.intp)
        return float(self._tree.kth_distances(q, k, ex)[0])

    def kth_distances(self, queries, k: int, exclude=None) -> np.ndarray:
        """Vectorized query; ``exclude[i] = -1`` means no exclusion for row i."""
        qs = as_samples(queries, "queries")
        if qs.shape[1] != self.d:
            raise ValueError(f"query dimension {qs.shape[1]} != index dimension {self.d}")
        return self._tree.kth_distances(qs, int(k), exclude)

    def self_kth_distances(self, k: int) -> np.ndarray:
        """k-th neighbor distance of every stored point among the others."""
        k = _check_k(k, self.n, 0)
        return self._tree.kth_distances(self.points, k, np.arange(self.n, dtype=np.intp))


def build_index(samples, norm: Norm | str = Norm.EUCLIDEAN,
                leafsize: int = DEFAULT_LEAFSIZE, backend: str | None = None) -> NeighborIndex:
    return NeighborIndex(samples, norm, leafsize=leafsize, backend=backend)


def kth_neighbor_distance(index: NeighborIndex, query, k: int, exclude: int | None = None) -> float:
    """Exact k-th smallest distance from `query` to the indexed points.

    `exclude` drops one stored point by position, which gives the
    leave-one-out distance when `query` is that point.
    """
    return index.kth_distance(query, k, exclude)


def brute_force_kth_distance(samples, query, k: int, norm: Norm | str = Norm.EUCLIDEAN,
                             exclude: int | None = None) -> float:
    """Full scan plus partial selection; the reference oracle for the kd-trees."""
    pts = as_samples(samples)
    exclude = _check_exclude(exclude, pts.shape[0])
    k = _check_k(k, pts.shape[0], exclude)
    q = _as_point(query, pts.shape[1])
    chebyshev = Norm.parse(norm) is Norm.CHEBYSHEV
    dist = reduced_distances(pts, q, chebyshev)
    if exclude is not None:
        dist = np.delete(dist, exclude)
    kth = float(np.partition(dist, k - 1)[k - 1])
    return kth if chebyshev else float(np.sqrt(kth))


def brute_force_kth_distances(samples, queries, k: int, norm: Norm | str = Norm.EUCLIDEAN,
                              exclude_self: bool = False) -> np.ndarray:
    pts = as_samples(samples)
    qs = as_samples(queries, "queries")
    return np.array([
        brute_force_kth_distance(pts, q, k, norm, exclude=i if exclude_self else None)
        for i, q in enumerate(qs)
    ])
