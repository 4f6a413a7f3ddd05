"""Synthetic densities with exact samplers and closed-form KL divergences.

Three families:

* ``UniformBox``: uniform on an axis-aligned box.
* ``Gaussian``: isotropic normal N(mean, scale * I).
* ``BumpMixture``: (1 - alpha) * uniform on the Euclidean unit ball plus m
  disjoint uniform balls of radius D, bump i carrying mass u_i / m.

Every spec has a one-line text form (see :func:`parse_spec`)::

    uniform-box d=2 lo=0.5 hi=1.5
    gaussian d=3 mean=1 scale=1
    bump-mixture d=1 m=4 alpha=0.2 D=0.05 weights=0.1,0.3,0.2,0.2

Vector fields accept one number (broadcast to all d coordinates) or exactly d
comma-separated numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from knnkl.special import unit_ball_volume

__all__ = [
    "BumpMixture",
    "Gaussian",
    "NotClosedFormError",
    "RngState",
    "SpecParseError",
    "UniformBox",
    "analytic_kl",
    "density",
    "format_spec",
    "parse_spec",
    "quadrature_kl",
    "sample",
    "simpson",
    "trial_stream",
]

_U64 = (1 << 64) - 1


class NotClosedFormError(ValueError):
    """No closed-form KL divergence for this pair of specs."""


class SpecParseError(ValueError):
    pass


@dataclass(frozen=True)
class RngState:
    """Seed plus stream id; equal states always produce equal draws."""

    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v <= _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))


def trial_stream(n: int, t: int) -> int:
    """Stream id for trial t at sample size n (injective for n, t < 2**32)."""
    if not (0 <= n < 1 << 32 and 0 <= t < 1 << 32):
        raise ValueError("sample size and trial index must fit in 32 bits")
    return (int(n) << 32) | int(t)


def _vec(values, d: int, name: str) -> tuple:
    arr = np.broadcast_to(np.asarray(values, dtype=np.float64), (d,))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return tuple(float(v) for v in arr)


def _points(spec, at) -> np.ndarray:
    pts = np.asarray(at, dtype=np.float64)
    if spec.d == 1 and pts.ndim <= 1:
        pts = pts.reshape(-1, 1)
    pts = np.atleast_2d(pts)
    if pts.shape[1] != spec.d:
        raise ValueError(f"point dimension {pts.shape[1]} does not match spec dimension {spec.d}")
    return pts


@dataclass(frozen=True)
class UniformBox:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        d = max(lo.size, hi.size)
        object.__setattr__(self, "lo", _vec(lo, d, "lo"))
        object.__setattr__(self, "hi", _vec(hi, d, "hi"))
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("uniform box needs lo < hi in every coordinate")

    @classmethod
    def cube(cls, lo: float, hi: float, d: int) -> "UniformBox":
        return cls((lo,) * d, (hi,) * d)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def log_volume(self) -> float:
        return math.fsum(math.log(b - a) for a, b in zip(self.lo, self.hi))

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        return lo + (hi - lo) * gen.random((n, self.d))

    def log_density(self, pts: np.ndarray) -> np.ndarray:
        inside = np.all((pts >= np.array(self.lo)) & (pts <= np.array(self.hi)), axis=1)
        return np.where(inside, -self.log_volume, -np.inf)

    def pieces_1d(self):
        return [(self.lo[0], self.hi[0])]

    def breaks_1d(self):
        return [self.lo[0], self.hi[0]]


@dataclass(frozen=True)
class Gaussian:
    mean: tuple
    scale: float = 1.0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "mean", _vec(mean, mean.size, "mean"))
        object.__setattr__(self, "scale", float(self.scale))
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("gaussian covariance scale must be > 0")

    @classmethod
    def isotropic(cls, mean: float, scale: float, d: int) -> "Gaussian":
        return cls((mean,) * d, scale)

    @property
    def d(self) -> int:
        return len(self.mean)

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return np.array(self.mean) + math.sqrt(self.scale) * gen.standard_normal((n, self.d))

    def log_density(self, pts: np.ndarray) -> np.ndarray:
        sq = np.sum((pts - np.array(self.mean)) ** 2, axis=1)
        return -0.5 * self.d * math.log(2 * math.pi * self.scale) - sq / (2 * self.scale)

    def pieces_1d(self):
        half = 10.0 * math.sqrt(self.scale)
        return [(self.mean[0] - half, self.mean[0] + half)]

    def breaks_1d(self):
        return []


@dataclass(frozen=True)
class BumpMixture:
    """(1 - alpha) * Q(x) + sum_i u_i / (m D^d) * Q((x - a_i) / D), Q uniform on the unit ball.

    Centers a_i sit on the first coordinate axis at 1 + 1.5 D + 3 i D, so
    bumps are 3D apart and clear of the base ball.
    """

    d: int
    alpha: float
    radius: float
    weights: tuple
    centers: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("dimension must be a positive integer")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        m = len(self.weights)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.radius > 0.0:
            raise ValueError("bump radius D must be > 0")
        if m < 1:
            raise ValueError("need at least one bump")
        if any(not (w >= 0.0 and math.isfinite(w)) for w in self.weights):
            raise ValueError("bump weights must be finite and >= 0")
        if abs(math.fsum(self.weights) / m - self.alpha) > 1e-12:
            raise ValueError("bump weights must average to alpha")
        cap = m * self.radius**self.d
        if any(w / cap >= 1.0 for w in self.weights):
            raise ValueError("each weight must satisfy u_i / (m D^d) < 1")
        step = 3.0 * self.radius
        centers = tuple(
            (1.0 + 1.5 * self.radius + i * step,) + (0.0,) * (self.d - 1) for i in range(m)
        )
        object.__setattr__(self, "centers", centers)

    @property
    def m(self) -> int:
        return len(self.weights)

    def component_probs(self) -> np.ndarray:
        return np.array([1.0 - self.alpha] + [w / self.m for w in self.weights])

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        comp = gen.choice(self.m + 1, size=n, p=self.component_probs())
        direction = gen.standard_normal((n, self.d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radial = gen.random(n) ** (1.0 / self.d)
        offsets = np.vstack([np.zeros(self.d), np.array(self.centers)])
        scales = np.concatenate([[1.0], np.full(self.m, self.radius)])
        return offsets[comp] + (scales[comp] * radial)[:, None] * direction

    def density_values(self, pts: np.ndarray) -> np.ndarray:
        vd = unit_ball_volume(self.d)
        out = np.where(np.linalg.norm(pts, axis=1) <= 1.0, (1.0 - self.alpha) / vd, 0.0)
        bump_height = 1.0 / (self.m * self.radius**self.d * vd)
        for w, c in zip(self.weights, self.centers):
            inside = np.linalg.norm(pts - np.array(c), axis=1) <= self.radius
            out = out + np.where(inside, w * bump_height, 0.0)
        return out

    def log_density(self, pts: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.density_values(pts))

    def pieces_1d(self):
        out = [(-1.0, 1.0)]
        for w, c in zip(self.weights, self.centers):
            if w > 0:
                out.append((c[0] - self.radius, c[0] + self.radius))
        return out

    def breaks_1d(self):
        out = [-1.0, 1.0]
        for c in self.centers:
            out += [c[0] - self.radius, c[0] + self.radius]
        return out


def sample(spec, n: int, rng) -> np.ndarray:
    """n i.i.d. draws as an (n, d) array; `rng` is an RngState or a numpy Generator."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    gen = rng.generator() if isinstance(rng, RngState) else rng
    return spec.sample(int(n), gen)


def density(spec, at):
    """Exact pdf at one point (float) or at each row of an (n, d) array."""
    pts = _points(spec, at)
    with np.errstate(under="ignore"):
        vals = np.exp(spec.log_density(pts))
    single = np.ndim(at) == 0 or (np.ndim(at) == 1 and (spec.d > 1 or np.size(at) == 1))
    return float(vals[0]) if single else vals


def analytic_kl(f, g) -> float:
    """Closed-form D(f || g) in nats for box/box, gaussian/gaussian and
    matched bump-mixture pairs."""
    if f.d != g.d:
        raise ValueError(f"dimension mismatch: {f.d} vs {g.d}")
    if isinstance(f, UniformBox) and isinstance(g, UniformBox):
        if any(a < c or b > e for a, b, c, e in zip(f.lo, f.hi, g.lo, g.hi)):
            raise ValueError("support of f is not contained in support of g")
        return g.log_volume - f.log_volume
    if isinstance(f, Gaussian) and isinstance(g, Gaussian):
        d, s1, s2 = f.d, f.scale, g.scale
        sq = math.fsum((a - b) ** 2 for a, b in zip(f.mean, g.mean))
        return 0.5 * (d * (s1 / s2) + sq / s2 - d + d * math.log(s2 / s1))
    if isinstance(f, BumpMixture) and isinstance(g, BumpMixture):
        if f.m != g.m or f.radius != g.radius:
            raise NotClosedFormError("bump mixtures need the same m and D (matched centers)")
        terms = [(1.0 - f.alpha) * math.log((1.0 - f.alpha) / (1.0 - g.alpha))]
        for u, v in zip(f.weights, g.weights):
            if u == 0.0:
                continue
            if v == 0.0:
                raise ValueError("support of f is not contained in support of g")
            terms.append(u / f.m * math.log(u / v))
        return math.fsum(terms)
    raise NotClosedFormError(
        f"no closed-form KL for {type(f).__name__} vs {type(g).__name__}"
    )


def simpson(func, a: float, b: float, panels: int) -> float:
    """Composite Simpson rule on [a, b]; `panels` is rounded up to an even number.

    The two end nodes are moved inward by one ulp so one-sided limits are used
    at discontinuities.
    """
    panels = max(2, panels + panels % 2)
    x = np.linspace(a, b, panels + 1)
    x[0] = np.nextafter(a, b)
    x[-1] = np.nextafter(b, a)
    y = func(x)
    h = (b - a) / panels
    return h / 3.0 * (y[0] + y[-1] + 4.0 * math.fsum(y[1:-1:2]) + 2.0 * math.fsum(y[2:-1:2]))


def quadrature_kl(f, g, resolution: int = 100_000) -> float:
    """D(f || g) by composite Simpson on the support of f (d = 1 only).

    The support is split at every discontinuity of f and g; Gaussian supports
    are truncated at 10 standard deviations. Intended as a test oracle.
    """
    if f.d != 1 or g.d != 1:
        raise NotImplementedError("quadrature_kl supports d = 1 only")
    pieces = f.pieces_1d()
    total_len = sum(b - a for a, b in pieces)
    cuts = sorted(set(g.breaks_1d()))

    def integrand(x):
        pts = x[:, None]
        lf = f.log_density(pts)
        lg = g.log_density(pts)
        if np.any(np.isinf(lg) & np.isfinite(lf)):
            raise ValueError("support of f is not contained in support of g")
        with np.errstate(invalid="ignore", under="ignore"):
            return np.where(np.isfinite(lf), np.exp(lf) * (lf - lg), 0.0)

    parts = []
    for a, b in pieces:
        edges = [a] + [c for c in cuts if a < c < b] + [b]
        for lo, hi in zip(edges[:-1], edges[1:]):
            panels = math.ceil(resolution * (hi - lo) / total_len)
            parts.append(simpson(integrand, lo, hi, panels))
    return math.fsum(parts)


# ---------------------------------------------------------------------------
# text form

def _fmt(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _fmt_vec(v: tuple) -> str:
    if all(x == v[0] for x in v):
        return _fmt(v[0])
    return ",".join(_fmt(x) for x in v)


def format_spec(spec) -> str:
    if isinstance(spec, UniformBox):
        return f"uniform-box d={spec.d} lo={_fmt_vec(spec.lo)} hi={_fmt_vec(spec.hi)}"
    if isinstance(spec, Gaussian):
        return f"gaussian d={spec.d} mean={_fmt_vec(spec.mean)} scale={_fmt(spec.scale)}"
    if isinstance(spec, BumpMixture):
        return (f"bump-mixture d={spec.d} m={spec.m} alpha={_fmt(spec.alpha)} "
                f"D={_fmt(spec.radius)} weights={','.join(_fmt(w) for w in spec.weights)}")
    raise TypeError(f"not a distribution spec: {spec!r}")


_GRAMMAR = {
    "uniform-box": ("d", "lo", "hi"),
    "gaussian": ("d", "mean", "scale"),
    "bump-mixture": ("d", "m", "alpha", "D", "weights"),
}


def _numbers(text: str, key: str) -> list:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise SpecParseError(f"{key}= expects a number or comma-separated numbers, got {text!r}") from None


def parse_spec(text: str):
    """Parse the one-line form produced by :func:`format_spec`."""
    tokens = text.split()
    if not tokens:
        raise SpecParseError("empty distribution spec")
    family = tokens[0]
    if family not in _GRAMMAR:
        raise SpecParseError(f"unknown family {family!r}; expected one of {', '.join(_GRAMMAR)}")
    fields = {}
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep or not value:
            raise SpecParseError(f"expected key=value, got {tok!r}")
        if key not in _GRAMMAR[family]:
            raise SpecParseError(f"unknown key {key!r} for {family}; allowed: {', '.join(_GRAMMAR[family])}")
        if key in fields:
            raise SpecParseError(f"duplicate key {key!r}")
        fields[key] = value
    missing = [k for k in _GRAMMAR[family] if k not in fields]
    if missing:
        raise SpecParseError(f"{family} is missing {', '.join(k + '=' for k in missing)}")
    try:
        d = int(fields["d"])
    except ValueError:
        raise SpecParseError(f"d= expects a positive integer, got {fields['d']!r}") from None
    if d < 1:
        raise SpecParseError("d= must be >= 1")

    def vector(key):
        vals = _numbers(fields[key], key)
        if len(vals) not in (1, d):
            raise SpecParseError(f"{key}= needs 1 or {d} values, got {len(vals)}")
        return tuple(vals * d if len(vals) == 1 else vals)

    def scalar(key):
        vals = _numbers(fields[key], key)
        if len(vals) != 1:
            raise SpecParseError(f"{key}= expects a single number")
        return vals[0]

    try:
        if family == "uniform-box":
            return UniformBox(vector("lo"), vector("hi"))
        if family == "gaussian":
            return Gaussian(vector("mean"), scalar("scale"))
        weights = _numbers(fields["weights"], "weights")
        try:
            m = int(fields["m"])
        except ValueError:
            raise SpecParseError(f"m= expects an integer, got {fields['m']!r}") from None
        if m != len(weights):
            raise SpecParseError(f"m={m} but {len(weights)} weights given")
        return BumpMixture(d, scalar("alpha"), scalar("D"), tuple(weights))
    except SpecParseError:
        raise
    except ValueError as exc:
        raise SpecParseError(f"invalid {family}: {exc}") from None
