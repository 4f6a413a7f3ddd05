import math

import mpmath
import numpy as np
import pytest

from knnkl.special import Norm, digamma, log_gamma, unit_ball_volume


def euler_gamma_by_series(terms=10_000):
    # H_n - ln n with the first Euler-Maclaurin corrections
    n = terms
    harmonic = math.fsum(1.0 / j for j in range(1, n + 1))
    return harmonic - math.log(n) - 1 / (2 * n) + 1 / (12 * n**2) - 1 / (120 * n**4)


def test_euler_gamma_oracle_matches_frozen_constant():
    assert euler_gamma_by_series() == pytest.approx(0.5772156649015329, abs=1e-14)


@pytest.mark.parametrize("x, expected", [
    (1.0, -0.5772156649015329),
    (2.0, 0.4227843350984671),
    (0.5, -1.9635100260214235),
])
def test_digamma_values(x, expected):
    assert digamma(x) == pytest.approx(expected, abs=1e-10)


def test_digamma_frozen_values_against_oracles():
    gamma = euler_gamma_by_series()
    assert digamma(1.0) == pytest.approx(-gamma, abs=1e-12)
    assert digamma(2.0) == pytest.approx(-gamma + 1.0, abs=1e-12)
    with mpmath.workdps(40):
        half = -mpmath.euler - 2 * mpmath.log(2)
    assert digamma(0.5) == pytest.approx(float(half), abs=1e-12)


def test_digamma_matches_mpmath_over_contract_range():
    xs = np.concatenate([np.logspace(-3, 9, 400), np.linspace(1e-3, 30, 400)])
    worst = max(abs(digamma(x) - float(mpmath.digamma(x))) for x in xs)
    assert worst <= 1e-10


@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5, float("nan")])
def test_digamma_domain(bad):
    with pytest.raises(ValueError):
        digamma(bad)


def test_digamma_recurrence():
    xs = np.random.default_rng(0).uniform(0.0, 100.0, 1000)
    xs = xs[xs > 0]
    err = [abs(digamma(x + 1) - digamma(x) - 1 / x) for x in xs]
    assert max(err) <= 1e-12


def test_digamma_strictly_increasing():
    grid = np.linspace(0.1, 50, 5000)
    vals = np.array([digamma(x) for x in grid])
    assert np.all(np.diff(vals) > 0)


def test_digamma_log_bracket():
    ms = np.unique(np.round(np.logspace(np.log10(2), 6, 400)).astype(int))
    for m in ms:
        gap = math.log(m) - digamma(m)
        assert 0 < gap <= 1 / m
        assert abs(math.log(m) - digamma(m + 1)) <= 1 / m


@pytest.mark.parametrize("x, expected", [(1.0, 0.0), (2.0, 0.0), (0.5, 0.5723649429247001)])
def test_log_gamma_values(x, expected):
    assert log_gamma(x) == pytest.approx(expected, abs=1e-10)


def test_log_gamma_half_oracle():
    with mpmath.workdps(40):
        assert log_gamma(0.5) == pytest.approx(float(mpmath.log(mpmath.sqrt(mpmath.pi))), abs=1e-15)


def test_log_gamma_functional_equation():
    for x in np.random.default_rng(1).uniform(0.01, 50, 500):
        assert log_gamma(x + 1) - log_gamma(x) == pytest.approx(math.log(x), abs=1e-12)


@pytest.mark.parametrize("bad", [0.0, -2.0])
def test_log_gamma_domain(bad):
    with pytest.raises(ValueError):
        log_gamma(bad)


def test_unit_ball_volume_trivial():
    assert unit_ball_volume(1, Norm.EUCLIDEAN) == 2.0
    assert unit_ball_volume(3, Norm.CHEBYSHEV) == 8.0
    assert unit_ball_volume(1, "linf") == 2.0


def test_unit_ball_volume_disc_by_quadrature():
    with mpmath.workdps(30):
        area = mpmath.quad(lambda x: 2 * mpmath.sqrt(1 - x * x), [-1, 1])
    assert unit_ball_volume(2) == pytest.approx(float(area), rel=1e-14)
    assert unit_ball_volume(2) == 3.141592653589793


def test_unit_ball_volume_disc_monte_carlo():
    pts = np.random.default_rng(3).uniform(-1, 1, size=(400_000, 2))
    frac = np.mean(np.sum(pts**2, axis=1) <= 1.0)
    assert 4 * frac == pytest.approx(unit_ball_volume(2), abs=0.02)


@pytest.mark.parametrize("d", range(1, 65))
def test_unit_ball_volume_closed_form(d):
    with mpmath.workdps(50):
        exact = mpmath.pi ** (mpmath.mpf(d) / 2) / mpmath.gamma(mpmath.mpf(d) / 2 + 1)
    assert unit_ball_volume(d) == pytest.approx(float(exact), rel=1e-12)
    assert unit_ball_volume(d, Norm.CHEBYSHEV) == 2.0**d


def test_unit_ball_volume_recursion():
    for d in range(3, 65):
        assert unit_ball_volume(d) == pytest.approx(
            unit_ball_volume(d - 2) * 2 * math.pi / d, rel=1e-12)


@pytest.mark.parametrize("d", [0, 65, -1, 2.5])
def test_unit_ball_volume_domain(d):
    with pytest.raises(ValueError):
        unit_ball_volume(d)


def test_norm_parse():
    assert Norm.parse("euclidean") is Norm.EUCLIDEAN
    assert Norm.parse("LINF") is Norm.CHEBYSHEV
    with pytest.raises(ValueError):
        Norm.parse("l1")
