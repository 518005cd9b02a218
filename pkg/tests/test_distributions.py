import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as spi
from scipy import special, stats

from rkreduce import distributions as D
from rkreduce.diagnostics import tv_quadrature
from rkreduce.rng import DOMAIN_SOURCE, CounterRNG

DENSITIES = [
    D.gaussian(0.7, 2.0),
    D.laplace(-1.0, 1.5),
    D.shifted_exponential(0.4),
    D.erlang(0.0, 2.0, 3),
    D.uniform_location(0.2),
    D.logistic(1.0, 2.0),
]


def _quad(f, a, b, pts=()):
    # plain scipy quad as an independent oracle, split at the given points
    edges = [a, *sorted(p for p in pts if a < p < b), b]
    return sum(spi.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=500)[0] for lo, hi in zip(edges[:-1], edges[1:]))


@pytest.mark.parametrize("d", DENSITIES, ids=lambda d: d.name)
def test_normalized_and_zero_outside_support(d):
    lo, hi = d.support
    mass = _quad(lambda t: float(d.pdf(t)), lo, hi, d.quad_points())
    assert mass == pytest.approx(1.0, abs=1e-8)
    if math.isfinite(lo):
        assert d.pdf(lo - 1e-6) == 0.0
    if math.isfinite(hi):
        assert d.pdf(hi + 1e-6) == 0.0


@pytest.mark.parametrize("d", DENSITIES, ids=lambda d: d.name)
def test_sampler_mean_within_five_se(d):
    lo, hi = d.support
    mean = _quad(lambda t: t * float(d.pdf(t)), lo, hi, d.quad_points())
    var = _quad(lambda t: (t - mean) ** 2 * float(d.pdf(t)), lo, hi, d.quad_points())
    x = d.sample(CounterRNG(11), np.arange(1_000_000), DOMAIN_SOURCE)
    assert abs(x.mean() - mean) <= 5 * math.sqrt(var / x.size)


@pytest.mark.parametrize("d", DENSITIES, ids=lambda d: d.name)
def test_sampler_ks_against_quadrature_cdf(d):
    x = np.sort(d.sample(CounterRNG(12), np.arange(100_000), DOMAIN_SOURCE))
    lo = d.support[0]
    # quadrature CDF on a grid of order statistics, interpolated between
    grid = np.quantile(x, np.linspace(0.001, 0.999, 200))
    start = lo if math.isfinite(lo) else grid[0] - 40 * (d.sd_hint or 1)
    cdf = np.cumsum([0.0] + [_quad(lambda t: float(d.pdf(t)), a, b, d.quad_points())
                             for a, b in zip(np.r_[start, grid[:-1]], grid)])[1:]
    emp = np.searchsorted(x, grid, side="right") / x.size
    assert np.max(np.abs(emp - cdf)) < 0.01


def test_density_quadrature_examples():
    g = D.gaussian()
    assert D.density_quadrature(g, -math.inf, math.inf) == pytest.approx(1.0, abs=1e-10)
    assert D.density_quadrature(g, 0.0, math.inf) == pytest.approx(0.5, abs=1e-10)
    assert D.density_quadrature(D.laplace(0, 1), -1.0, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-10)
    with pytest.raises(ValueError):
        D.density_quadrature(g, 1.0, 0.0)


TARGETS = [D.gaussian_psi(1.0), D.logistic_psi(1.0), D.mollified_laplace_psi(0.3)]


@pytest.mark.parametrize("t", TARGETS, ids=lambda t: t.name)
def test_psi_convex_and_derivative(t):
    z = np.linspace(-15, 15, 3001)
    a, b = z[:-1], z[1:]
    assert np.all(t.psi(0.5 * (a + b)) <= 0.5 * (t.psi(a) + t.psi(b)) + 1e-10)
    h = 1e-5
    fd = (t.psi(z + h) - t.psi(z - h)) / (2 * h)
    assert np.max(np.abs(fd - t.psi_prime(z))) < 1e-6


@pytest.mark.parametrize("t", TARGETS, ids=lambda t: t.name)
def test_psi_density_moments(t):
    f = lambda z, k: z**k * math.exp(-float(t.psi(np.array(z))))
    m0 = _quad(lambda z: f(z, 0), -math.inf, math.inf, [0.0])
    m1 = _quad(lambda z: f(z, 1), -math.inf, math.inf, [0.0])
    m2 = _quad(lambda z: f(z, 2), -math.inf, math.inf, [0.0])
    assert m0 == pytest.approx(1.0, abs=1e-6)
    assert m1 == pytest.approx(0.0, abs=1e-6)
    if t.unit_variance:
        assert m2 == pytest.approx(1.0, abs=1e-5)
    else:
        # Laplace(0, 1) plus N(0, eta^2)
        assert m2 == pytest.approx(2.0 + t.eta**2, abs=1e-5)


def _mollified_oracle(z, eta):
    # Q-form of the mollified density, written with plain ndtr
    z = np.asarray(z, float)
    a = np.exp(z + eta**2 / 2) / 2 * special.ndtr(-(z + eta**2) / eta)
    b = np.exp(-z + eta**2 / 2) / 2 * special.ndtr(-(-z + eta**2) / eta)
    return a + b


@pytest.mark.parametrize("eta", [0.05, 0.3, 0.9])
def test_mollified_closed_form_matches_convolution(eta):
    t = D.mollified_laplace_psi(eta)
    for z in (-6.0, -1.3, 0.0, 0.2, 2.5, 7.0):
        conv = _quad(lambda w: 0.5 * math.exp(-abs(w)) * math.exp(-0.5 * ((z - w) / eta) ** 2)
                     / (eta * math.sqrt(2 * math.pi)), -math.inf, math.inf, [0.0, z])
        assert float(np.exp(-t.psi(np.array(z)))) == pytest.approx(conv, abs=1e-8)
        assert float(np.exp(-t.psi(np.array(z)))) == pytest.approx(float(_mollified_oracle(z, eta)), rel=1e-10)


def test_mollified_stays_finite_far_out_and_bounds():
    t = D.mollified_laplace_psi(0.5)
    z = np.linspace(-800, 800, 4001)
    assert np.all(np.isfinite(t.psi(z)))
    assert np.max(np.abs(t.psi_prime(z))) <= 1.0
    for eta in (0.01, 0.5, 0.99):
        assert math.exp(D.mollified_laplace_psi(eta).psi0) <= 10.0


@pytest.mark.parametrize("eta", [0.1, 0.5])
def test_mollified_close_to_laplace(eta):
    t = D.mollified_laplace_psi(eta)
    tv = tv_quadrature(t.standard_density(), D.laplace(0, 1), (-30, 30), points=[0.0])
    assert tv <= eta / 2


def test_mollified_eta_range():
    for eta in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            D.mollified_laplace_psi(eta)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0, 5.0, 10.0])
def test_gaussian_kappa_is_sigma(sigma):
    assert D.logconcave_kappa(D.gaussian_psi(sigma)) == pytest.approx(sigma, abs=1e-9)


def test_kappa_infinite_branches():
    assert D.logconcave_kappa(D.logistic_psi(2.0)) == math.inf
    assert D.logconcave_kappa(D.logistic_psi(D.PI_SQRT3)) == math.inf
    assert D.logconcave_kappa(D.mollified_laplace_psi(0.5, 1.5)) == math.inf
    # below pi/sqrt3 the logistic root is finite: psi'(k) = sigma
    k = D.logconcave_kappa(D.logistic_psi(1.5))
    assert D.PI_SQRT3 * math.tanh(0.5 * D.PI_SQRT3 * k) == pytest.approx(1.5, abs=1e-9)


def test_tau_values():
    assert D.logconcave_tau(D.logistic_psi(2.0)) == 0.0
    tau3 = D.logconcave_tau(D.gaussian_psi(3.0))
    # Gaussian psi: kappa = sigma, so tau = 2 Q(3) + (2/3) phi(3)
    oracle = 2 * stats.norm.sf(3.0) + (2 / 3) * stats.norm.pdf(3.0)
    assert tau3 == pytest.approx(oracle, rel=1e-9)
    assert tau3 == pytest.approx(0.005654361671218862, rel=1e-9)
    assert tau3 <= 2 * math.exp(-4.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 8.0), st.floats(0.05, 3.0))
def test_tau_nonincreasing_in_sigma(s, ds):
    t1 = D.logconcave_tau(D.gaussian_psi(s))
    t2 = D.logconcave_tau(D.gaussian_psi(s + ds))
    assert t2 <= t1 + 1e-12
    l1 = D.logconcave_tau(D.logistic_psi(s))
    l2 = D.logconcave_tau(D.logistic_psi(s + ds))
    assert l2 <= l1 + 1e-12


def test_target_density_scaling():
    t = D.logistic_psi(2.5)
    ref = D.logistic(1.0, 2.5)
    y = np.linspace(-10, 10, 41)
    assert np.allclose(t.density(1.0).pdf(y), ref.pdf(y), rtol=1e-12)
    assert t.with_sigma(3.0).sigma == 3.0 and t.sigma == 2.5
