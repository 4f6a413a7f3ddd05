"""kNN estimators of KL divergence, differential entropy and cross-entropy.

With eps_i the k-th neighbor distance of X_i among the other X's and nu_i its
k-th neighbor distance among the Y's, the divergence estimate is::

    D = (d / N) * sum_i ln(nu_i / eps_i) + ln(M / (N - 1))

It splits exactly into a Kozachenko-Leonenko entropy term, a cross-entropy
term and a small digamma residual (see :func:`decompose`). All values are in
nats. Sums of logarithms use :func:`math.fsum`, so results do not depend on
sample order or on how neighbor queries were scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from knnkl.spatial import as_samples, build_index
from knnkl.special import Norm, digamma, log_unit_ball_volume, unit_ball_volume

__all__ = [
    "DecompositionReport",
    "DivergenceEstimate",
    "EstimatorConfig",
    "ZeroDistanceError",
    "decompose",
    "density_estimate",
    "estimate_cross_entropy",
    "estimate_entropy",
    "estimate_kl",
]


class ZeroDistanceError(ValueError):
    """A k-th neighbor distance was exactly zero (duplicated points)."""

    def __init__(self, side: str, index: int):
        self.side = side
        self.index = index
        what = "within x (eps)" if side == "x" else "from x to y (nu)"
        super().__init__(f"zero k-th neighbor distance {what} at x index {index}")


@dataclass(frozen=True)
class EstimatorConfig:
    """k, norm and what to do when a k-th neighbor distance is zero.

    ``clamp_floor=None`` means the Error policy; a positive float replaces
    every distance below it by the floor.
    """

    k: int = 3
    norm: Norm = Norm.EUCLIDEAN
    clamp_floor: float | None = None

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "norm", Norm.parse(self.norm))
        if self.clamp_floor is not None and not self.clamp_floor > 0:
            raise ValueError(f"clamp floor must be > 0, got {self.clamp_floor!r}")

    @classmethod
    def parse_policy(cls, policy: str) -> float | None:
        """'error' -> None, 'clamp:1e-12' -> 1e-12."""
        policy = policy.strip().lower()
        if policy == "error":
            return None
        if policy.startswith("clamp:"):
            floor = float(policy.split(":", 1)[1])
            if not floor > 0:
                raise ValueError("clamp floor must be > 0")
            return floor
        raise ValueError(f"unknown zero-distance policy {policy!r}; use 'error' or 'clamp:FLOOR'")


DEFAULT_CONFIG = EstimatorConfig()


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    n: int
    m: int
    k: int
    norm: Norm


@dataclass(frozen=True)
class DecompositionReport:
    entropy_part: float
    cross_entropy_part: float
    digamma_residual: float

    @property
    def kl(self) -> float:
        return self.cross_entropy_part - self.entropy_part + self.digamma_residual


def _apply_policy(dist: np.ndarray, cfg: EstimatorConfig, side: str) -> np.ndarray:
    if cfg.clamp_floor is not None:
        return np.maximum(dist, cfg.clamp_floor)
    zeros = np.flatnonzero(dist == 0.0)
    if zeros.size:
        raise ZeroDistanceError(side, int(zeros[0]))
    return dist


def _check_sizes(n: int, m: int | None, k: int):
    if n < k + 1:
        raise ValueError(f"need N >= k + 1 = {k + 1} samples from f, got N = {n}")
    if m is not None and m < k:
        raise ValueError(f"need M >= k = {k} samples from g, got M = {m}")


def _pair(x, y):
    x = as_samples(x, "x")
    y = as_samples(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: x has d={x.shape[1]}, y has d={y.shape[1]}")
    return x, y


def _eps(x: np.ndarray, cfg: EstimatorConfig) -> np.ndarray:
    return _apply_policy(build_index(x, cfg.norm).self_kth_distances(cfg.k), cfg, "x")


def _nu(x: np.ndarray, y: np.ndarray, cfg: EstimatorConfig) -> np.ndarray:
    return _apply_policy(build_index(y, cfg.norm).kth_distances(x, cfg.k), cfg, "y")


def _mean_log(dist: np.ndarray) -> float:
    return math.fsum(np.log(dist)) / dist.size


def _kl_from_distances(eps, nu, n, m, d) -> float:
    return d * (_mean_log(nu) - _mean_log(eps)) + math.log(m / (n - 1))


def estimate_kl(x, y, cfg: EstimatorConfig = DEFAULT_CONFIG) -> DivergenceEstimate:
    """kNN estimate of D(f || g) from x ~ f (N rows) and y ~ g (M rows)."""
    x, y = _pair(x, y)
    (n, d), m = x.shape, y.shape[0]
    _check_sizes(n, m, cfg.k)
    eps = _eps(x, cfg)
    nu = _nu(x, y, cfg)
    return DivergenceEstimate(_kl_from_distances(eps, nu, n, m, d), n, m, cfg.k, cfg.norm)


def estimate_entropy(x, cfg: EstimatorConfig = DEFAULT_CONFIG) -> float:
    """Kozachenko-Leonenko estimate of h(f)."""
    x = as_samples(x, "x")
    n, d = x.shape
    _check_sizes(n, None, cfg.k)
    eps = _eps(x, cfg)
    return (-digamma(cfg.k) + digamma(n) + log_unit_ball_volume(d, cfg.norm)
            + d * _mean_log(eps))


def estimate_cross_entropy(x, y, cfg: EstimatorConfig = DEFAULT_CONFIG) -> float:
    """kNN estimate of -E_f[ln g] from x ~ f and y ~ g."""
    x, y = _pair(x, y)
    m, d = y.shape
    if m < cfg.k:
        raise ValueError(f"need M >= k = {cfg.k} samples from g, got M = {m}")
    nu = _nu(x, y, cfg)
    return (-digamma(cfg.k) + digamma(m + 1) + log_unit_ball_volume(d, cfg.norm)
            + d * _mean_log(nu))


def digamma_residual(n: int, m: int) -> float:
    """(ln M - psi(M + 1)) - (ln(N - 1) - psi(N)); bounded by 1/M + 1/N."""
    return (math.log(m) - digamma(m + 1)) - (math.log(n - 1) - digamma(n))


def decompose(x, y, cfg: EstimatorConfig = DEFAULT_CONFIG) -> DecompositionReport:
    x, y = _pair(x, y)
    _check_sizes(x.shape[0], y.shape[0], cfg.k)
    return DecompositionReport(
        entropy_part=estimate_entropy(x, cfg),
        cross_entropy_part=estimate_cross_entropy(x, y, cfg),
        digamma_residual=digamma_residual(x.shape[0], y.shape[0]),
    )


def density_estimate(samples, at, cfg: EstimatorConfig = DEFAULT_CONFIG,
                     self_excluded: bool = False) -> float:
    """kNN density estimate k / (count * c_d * r**d) at the point `at`.

    With ``self_excluded`` the point must be one of the samples; that sample is
    left out and count = N - 1. Otherwise count = N and nothing is excluded.
    """
    pts = as_samples(samples)
    n, d = pts.shape
    q = np.atleast_1d(np.asarray(at, dtype=np.float64))
    if q.shape != (d,):
        raise ValueError(f"point must have dimension {d}")
    index = build_index(pts, cfg.norm)
    if self_excluded:
        hits = np.flatnonzero(np.all(pts == q, axis=1))
        if hits.size == 0:
            raise ValueError("self_excluded requires `at` to be one of the samples")
        r = index.kth_distance(q, cfg.k, exclude=int(hits[0]))
        count = n - 1
    else:
        r = index.kth_distance(q, cfg.k)
        count = n
    r = float(_apply_policy(np.array([r]), cfg, "x" if self_excluded else "y")[0])
    return cfg.k / (count * unit_ball_volume(d, cfg.norm) * r**d)
