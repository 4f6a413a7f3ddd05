import math

import numpy as np
import pytest

from knnkl.distributions import (
    BumpMixture,
    Gaussian,
    NotClosedFormError,
    RngState,
    SpecParseError,
    UniformBox,
    analytic_kl,
    density,
    format_spec,
    parse_spec,
    quadrature_kl,
    sample,
    simpson,
    trial_stream,
)

BUMP_F = BumpMixture(1, 0.2, 0.1, (0.2,) * 4)
BUMP_G = BumpMixture(1, 0.2, 0.1, (0.1, 0.3, 0.2, 0.2))


def one_d_specs():
    return [UniformBox((0.5,), (1.5,)), Gaussian((0.0,), 2.0), BUMP_G]


def test_uniform_box_mean():
    x = sample(UniformBox((0.0,), (2.0,)), 100_000, RngState(1))
    sigma = (2 / math.sqrt(12)) / math.sqrt(x.shape[0])
    assert abs(x.mean() - 1.0) < 3 * sigma


def test_gaussian_variance():
    n = 100_000
    x = sample(Gaussian((0.0,), 2.0), n, RngState(2))
    # sd of the sample variance of a normal: s^2 sqrt(2 / (n - 1))
    assert abs(x.var(ddof=1) - 2.0) < 3 * 2.0 * math.sqrt(2 / (n - 1))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_bump_fraction(d):
    radius = 0.1 if d == 1 else 0.3
    spec = BumpMixture(d, 0.002 if d == 3 else 0.02, radius,
                       (0.002,) * 4 if d == 3 else (0.02,) * 4)
    n = 100_000
    x = sample(spec, n, RngState(3, d))
    inside = np.zeros(n, bool)
    for c in spec.centers:
        inside |= np.linalg.norm(x - np.array(c), axis=1) <= radius
    a = spec.alpha
    assert abs(inside.mean() - a) < 3 * math.sqrt(a * (1 - a) / n)
    # the rest lies in the base ball
    assert np.all(np.linalg.norm(x[~inside], axis=1) <= 1.0)


def test_density_examples():
    assert density(UniformBox.cube(0.0, 2.0, 2), [1.0, 1.0]) == 0.25
    assert density(Gaussian((0.0,), 1.0), 0.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert density(UniformBox((0.5,), (1.5,)), 2.0) == 0.0


def test_density_vectorized_and_bump_heights():
    # base height (1 - alpha) / 2; bump i adds u_i / (m D 2)
    vals = density(BUMP_G, np.array([[0.0], [BUMP_G.centers[1][0]], [5.0]]))
    assert vals == pytest.approx([0.4, 0.3 / (4 * 0.1 * 2), 0.0], rel=1e-15)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_analytic_kl_examples(d):
    assert analytic_kl(UniformBox.cube(0.5, 1.5, d), UniformBox.cube(0, 2, d)) == pytest.approx(
        d * math.log(2), rel=1e-15)
    assert analytic_kl(Gaussian.isotropic(0, 1, d), Gaussian.isotropic(1, 1, d)) == pytest.approx(
        d / 2, rel=1e-15)
    assert analytic_kl(Gaussian.isotropic(0, 1, d), Gaussian.isotropic(0, 2, d)) == pytest.approx(
        d / 2 * (math.log(2) - 0.5), rel=1e-14)


def test_bump_closed_form():
    a, m = 0.2, 4
    want = a * math.log(a) - a / m * sum(math.log(v) for v in BUMP_G.weights)
    assert want == pytest.approx(0.014384103622589, abs=1e-15)
    assert analytic_kl(BUMP_F, BUMP_G) == pytest.approx(want, abs=1e-15)
    for d in (2, 3):
        f = BumpMixture(d, 0.001, 0.2, (0.001,) * 4)
        g = BumpMixture(d, 0.001, 0.2, (0.0005, 0.0015, 0.001, 0.001))
        want = 0.001 * math.log(0.001) - 0.001 / 4 * sum(math.log(v) for v in g.weights)
        assert analytic_kl(f, g) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("f, g", [
    (UniformBox((0.5,), (1.5,)), UniformBox((0.0,), (2.0,))),
    (Gaussian((0.0,), 1.0), Gaussian((1.0,), 1.0)),
    (Gaussian((0.0,), 1.0), Gaussian((0.0,), 2.0)),
    (BUMP_F, BUMP_G),
    (BUMP_G, BUMP_F),
])
def test_quadrature_matches_closed_form(f, g):
    assert abs(quadrature_kl(f, g, 100_000) - analytic_kl(f, g)) <= 1e-6


@pytest.mark.parametrize("spec", one_d_specs())
def test_quadrature_self_is_zero(spec):
    assert abs(quadrature_kl(spec, spec, 100_000)) <= 1e-10


def test_quadrature_rejects_higher_dimension():
    with pytest.raises(NotImplementedError):
        quadrature_kl(Gaussian((0.0, 0.0)), Gaussian((0.0, 0.0)))


def test_simpson_exact_on_cubics():
    assert simpson(lambda x: x**3 - x, 0.0, 2.0, 2) == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("spec", one_d_specs())
def test_normalization_1d(spec):
    total = sum(simpson(lambda x: density(spec, x[:, None]), a, b, 100_000)
                for a, b in spec.pieces_1d())
    assert abs(total - 1.0) <= 1e-6


@pytest.mark.parametrize("spec, lo, hi", [
    (UniformBox((0.0, -1.0), (2.0, 0.5)), (-1.0, -2.0), (3.0, 1.0)),
    (Gaussian((0.0, 1.0), 2.0), (-15.0, -14.0), (15.0, 16.0)),
    (BumpMixture(2, 0.02, 0.1, (0.01, 0.03, 0.02, 0.02)), (-1.0, -1.0), (2.3, 1.0)),
])
def test_normalization_2d_tensor(spec, lo, hi):
    h = 2e-3
    xs = np.arange(lo[0], hi[0], h) + h / 2
    ys = np.arange(lo[1], hi[1], h) + h / 2
    total = 0.0
    for block in np.array_split(xs, 20):
        gx, gy = np.meshgrid(block, ys, indexing="ij")
        total += density(spec, np.c_[gx.ravel(), gy.ravel()]).sum() * h * h
    assert abs(total - 1.0) <= 1e-3


def cdf_from_density(spec, grid):
    # cumulative trapezoid; the grid straddles every jump by one ulp
    pdf = density(spec, grid[:, None])
    steps = np.diff(grid) * (pdf[1:] + pdf[:-1]) / 2
    return np.concatenate([[0.0], np.cumsum(steps)])


@pytest.mark.parametrize("spec", one_d_specs())
def test_sampler_matches_density_ks(spec):
    n = 100_000
    x = np.sort(sample(spec, n, RngState(11)).ravel())
    lo = min(a for a, _ in spec.pieces_1d())
    hi = max(b for _, b in spec.pieces_1d())
    edges = sorted({lo, hi, *spec.breaks_1d()})
    grid = np.unique(np.concatenate(
        [np.linspace(a, b, 20_001) for a, b in zip(edges[:-1], edges[1:])]
        + [np.nextafter(np.array(edges), -np.inf), np.nextafter(np.array(edges), np.inf)]))
    cdf = np.interp(x, grid, cdf_from_density(spec, grid))
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(n) / n
    ks = max(np.max(ecdf_hi - cdf), np.max(cdf - ecdf_lo))
    assert ks < 1.628 / math.sqrt(n)


SPECS = [
    "uniform-box d=2 lo=0.5 hi=1.5",
    "uniform-box d=3 lo=0,-1,0.25 hi=1,1,2",
    "gaussian d=3 mean=1 scale=1",
    "gaussian d=2 mean=0.1,-3.5 scale=0.3",
    "bump-mixture d=1 m=4 alpha=0.2 D=0.1 weights=0.1,0.3,0.2,0.2",
    "bump-mixture d=2 m=2 alpha=0.001 D=0.05 weights=0.0005,0.0015",
]


@pytest.mark.parametrize("text", SPECS)
def test_spec_round_trip(text):
    spec = parse_spec(text)
    assert format_spec(spec) == text
    assert parse_spec(format_spec(spec)) == spec


def test_round_trip_awkward_floats():
    spec = Gaussian((0.1 + 0.2, -1e-300), 1 / 3)
    assert parse_spec(format_spec(spec)) == spec


@pytest.mark.parametrize("text, fragment", [
    ("", "empty"),
    ("poisson d=1", "unknown family"),
    ("gaussian d=1 mean=0", "missing scale="),
    ("gaussian d=1 mean=0 scale=1 extra=2", "unknown key"),
    ("gaussian d=1 mean=0 mean=1 scale=1", "duplicate"),
    ("gaussian d=2 mean=0,1,2 scale=1", "needs 1 or 2"),
    ("gaussian d=x mean=0 scale=1", "d="),
    ("gaussian d=1 mean=zero scale=1", "mean="),
    ("gaussian d=1 mean=0 scale=-1", "scale"),
    ("uniform-box d=1 lo=2 hi=1", "lo < hi"),
    ("bump-mixture d=1 m=3 alpha=0.2 D=0.1 weights=0.2,0.2", "m=3"),
    ("bump-mixture d=1 m=2 alpha=0.2 D=0.1 weights=0.1,0.2", "average"),
    ("gaussian d=1 mean scale=1", "key=value"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(SpecParseError, match=fragment):
        parse_spec(text)


def test_published_bump_example_violates_height_constraint():
    # D = 0.05 with alpha = 0.2 would need u_i < m D = 0.2
    with pytest.raises(SpecParseError, match="u_i"):
        parse_spec("bump-mixture d=1 m=4 alpha=0.2 D=0.05 weights=0.1,0.3,0.2,0.2")


def test_bump_constraints():
    spec = BumpMixture(2, 0.01, 0.1, (0.0, 0.02, 0.01, 0.01))
    c = np.array(spec.centers)
    gaps = np.linalg.norm(c[:, None] - c[None], axis=-1)[np.triu_indices(4, 1)]
    assert gaps.min() > 2 * spec.radius
    assert np.all(np.linalg.norm(c, axis=1) - spec.radius > 1.0)
    assert abs(sum(spec.weights) / spec.m - spec.alpha) <= 1e-12


def test_gibbs_and_self_divergence():
    specs = [UniformBox.cube(0, 1, 2), UniformBox.cube(-1, 3, 2), Gaussian.isotropic(0, 1, 2),
             Gaussian.isotropic(0.5, 3, 2), Gaussian((1.0, -2.0), 0.5)]
    for f in specs:
        assert analytic_kl(f, f) == 0.0
    rng = np.random.default_rng(0)
    for _ in range(200):
        f = Gaussian(tuple(rng.normal(size=3)), rng.uniform(0.1, 5))
        g = Gaussian(tuple(rng.normal(size=3)), rng.uniform(0.1, 5))
        assert analytic_kl(f, g) >= 0.0
        w = rng.dirichlet(np.ones(4)) * 0.4
        w2 = rng.dirichlet(np.ones(4)) * 0.4
        assert analytic_kl(BumpMixture(1, 0.1, 0.2, tuple(w)),
                           BumpMixture(1, 0.1, 0.2, tuple(w2))) >= -1e-15
    for s in (BUMP_F, BUMP_G):
        assert analytic_kl(s, s) == 0.0


def test_not_closed_form_and_support():
    with pytest.raises(NotClosedFormError):
        analytic_kl(UniformBox((0.0,), (1.0,)), Gaussian((0.0,), 1.0))
    with pytest.raises(NotClosedFormError):
        analytic_kl(BUMP_F, BumpMixture(1, 0.2, 0.2, (0.2,) * 4))
    with pytest.raises(ValueError, match="support"):
        analytic_kl(UniformBox((0.0,), (2.0,)), UniformBox((0.5,), (1.5,)))
    with pytest.raises(ValueError, match="support"):
        quadrature_kl(UniformBox((0.0,), (2.0,)), UniformBox((0.5,), (1.5,)), 1000)
    with pytest.raises(ValueError, match="dimension"):
        analytic_kl(Gaussian((0.0,)), Gaussian((0.0, 0.0)))


def test_rng_determinism():
    spec = Gaussian((0.0, 0.0), 1.0)
    a = sample(spec, 50, RngState(7, 3))
    assert np.array_equal(a, sample(spec, 50, RngState(7, 3)))
    assert not np.array_equal(a, sample(spec, 50, RngState(7, 4)))
    assert not np.array_equal(a, sample(spec, 50, RngState(8, 3)))
    # stream ids are injective in (n, t)
    assert trial_stream(100, 1) != trial_stream(101, 0)
    assert trial_stream(1, 0) == 1 << 32
    with pytest.raises(ValueError):
        RngState(-1)
    with pytest.raises(ValueError):
        trial_stream(1 << 32, 0)


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_sample_size_validated(n):
    with pytest.raises(ValueError):
        sample(Gaussian((0.0,)), n, RngState())
