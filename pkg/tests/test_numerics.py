import math

import numpy as np
import pytest
from scipy import special

from rkreduce.numerics import QuadratureError, integrate, sign_regions


def test_integrate_infinite_gaussian():
    val = integrate(lambda t: math.exp(-t * t / 2), -math.inf, math.inf, points=[0.0])
    assert val == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)


def test_integrate_kink_with_split_point():
    val = integrate(lambda t: abs(t - 0.3), -1.0, 1.0, points=[0.3])
    assert val == pytest.approx(0.5 * 1.3**2 + 0.5 * 0.7**2, abs=1e-12)


def test_integrate_degenerate_and_reversed():
    assert integrate(math.sin, 2.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        integrate(math.sin, 1.0, 0.0)


def test_integrate_reports_nonconvergence():
    with pytest.raises(QuadratureError):
        integrate(lambda t: 1.0 / abs(t) if t else 0.0, -1.0, 1.0, limit=5)


def test_sign_regions_quadratic_times_gaussian():
    # (1.5 - t^2) e^{-t^2} is positive on (-sqrt 1.5, sqrt 1.5)
    regions = sign_regions(lambda t: (1.5 - t * t) * np.exp(-t * t), -40, 40)
    assert len(regions) == 1
    a, b = regions[0]
    assert a == pytest.approx(-math.sqrt(1.5), abs=1e-9)
    assert b == pytest.approx(math.sqrt(1.5), abs=1e-9)


def test_sign_regions_ignores_underflow_zeros():
    # positive everywhere but underflows to exactly 0 in the far tails
    regions = sign_regions(lambda t: np.exp(-t * t), -400, 400)
    assert regions == [(-math.inf, math.inf)]


def test_sign_regions_open_ends():
    regions = sign_regions(lambda t: special.ndtr(t) - 0.25, -10, 10)
    assert regions[0][1] == math.inf
    assert regions[0][0] == pytest.approx(float(special.ndtri(0.25)), abs=1e-9)
