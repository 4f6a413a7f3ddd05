"""Scalar special functions and unit-ball volumes used by the kNN estimators."""

from __future__ import annotations

import enum
import math

__all__ = ["Norm", "digamma", "log_gamma", "unit_ball_volume", "log_unit_ball_volume"]

MAX_DIM = 64

# B_2n / (2n) for n = 1..7
_DIGAMMA_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_DIGAMMA_SHIFT = 8.0


class Norm(str, enum.Enum):
    """Distance used for every neighbor search and ball volume."""

    EUCLIDEAN = "l2"
    CHEBYSHEV = "linf"

    @classmethod
    def parse(cls, value: "Norm | str") -> "Norm":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "l2": cls.EUCLIDEAN,
            "euclidean": cls.EUCLIDEAN,
            "linf": cls.CHEBYSHEV,
            "chebyshev": cls.CHEBYSHEV,
            "max": cls.CHEBYSHEV,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown norm {value!r}; expected 'l2' or 'linf'") from None


def _check_positive(x: float, name: str) -> float:
    x = float(x)
    if not x > 0.0:  # also rejects nan
        raise ValueError(f"{name} requires x > 0, got {x!r}")
    return x


def digamma(x: float) -> float:
    """Digamma function psi(x) = d/dx ln Gamma(x) for real x > 0.

    Shifts the argument above 8 with psi(x) = psi(x + 1) - 1/x, then sums the
    Bernoulli asymptotic series through the x**-14 term.
    """
    x = _check_positive(x, "digamma")
    shift = 0.0
    while x < _DIGAMMA_SHIFT:
        shift += 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for coef in reversed(_DIGAMMA_ASYMPTOTIC):
        series = (series + coef) * inv2
    return math.log(x) - 0.5 / x - series - shift


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    return math.lgamma(_check_positive(x, "log_gamma"))


def _check_dim(d: int) -> int:
    if isinstance(d, bool) or int(d) != d:
        raise ValueError(f"dimension must be an integer, got {d!r}")
    d = int(d)
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension must lie in [1, {MAX_DIM}], got {d}")
    return d


def unit_ball_volume(d: int, norm: Norm | str = Norm.EUCLIDEAN) -> float:
    """Volume c_d of the unit ball of `norm` in `d` dimensions.

    The Euclidean value is built from V_1 = 2, V_2 = pi and V_d = V_{d-2} 2 pi / d,
    which equals pi**(d/2) / Gamma(d/2 + 1).
    """
    d = _check_dim(d)
    if Norm.parse(norm) is Norm.CHEBYSHEV:
        return 2.0**d
    vol = 2.0 if d % 2 else math.pi
    for j in range(4 - d % 2, d + 1, 2):
        vol *= 2.0 * math.pi / j
    return vol


def log_unit_ball_volume(d: int, norm: Norm | str = Norm.EUCLIDEAN) -> float:
    return math.log(unit_ball_volume(d, norm))
