import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gamma

from fvspine.errors import ConvergenceError, DomainError
from fvspine.numerics import (
    KRONROD_DEGREE,
    agm,
    gamma_quarter,
    integrate_line,
    lemniscate_constant,
    newton_complex,
)


def test_agm_fixed_points():
    assert agm(1, 1) == 1
    assert agm(2, 2) == 2


def test_agm_sqrt2_against_own_iteration():
    a, b = 1.0, math.sqrt(2.0)
    for _ in range(10):
        a, b = (a + b) / 2, math.sqrt(a * b)
    assert agm(1, math.sqrt(2)) == pytest.approx(a, abs=1e-15)
    assert agm(1, math.sqrt(2)) == pytest.approx(1.1981402347355923, abs=1e-15)


def test_agm_matches_quadrature_lemniscate():
    quarter = integrate_line(lambda t: 1 / np.sqrt(1 - t ** 4), 0, 1, tol=1e-13, singular="end")
    assert math.pi / (2 * agm(1, math.sqrt(2))) == pytest.approx(quarter.value.real, abs=1e-12)


@pytest.mark.parametrize("a,b", [(0, 1), (-1, 2), (1, float("nan"))])
def test_agm_rejects_bad_input(a, b):
    with pytest.raises(DomainError):
        agm(a, b)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_agm_sandwich(a, b):
    m = agm(a, b)
    assert math.sqrt(a * b) * (1 - 1e-14) <= m <= (a + b) / 2 * (1 + 1e-14)
    assert min(a, b) <= m <= max(a, b)
    if abs(a - b) > 1e-6 * max(a, b):
        assert math.sqrt(a * b) < (a + b) / 2


def test_gamma_quarter():
    assert gamma_quarter() == pytest.approx(gamma(0.25), rel=1e-14)
    assert gamma_quarter() == pytest.approx(3.6256099, abs=1e-7)


def test_gamma_quarter_from_quadrature_oracle():
    quarter = integrate_line(lambda t: 1 / np.sqrt(1 - t ** 4), 0, 1, tol=1e-13, singular="end")
    varpi = 2 * quarter.value.real
    assert math.sqrt(varpi * 2 * math.sqrt(2 * math.pi)) == pytest.approx(gamma_quarter(), abs=1e-12)


def test_scale_constant_and_identity():
    g = gamma_quarter()
    assert 4 * math.pi ** 1.5 / g ** 2 == pytest.approx(1.69443, abs=1e-5)
    assert g * g * agm(1, math.sqrt(2)) == pytest.approx(2 * math.pi * math.sqrt(2 * math.pi), rel=1e-12)
    assert lemniscate_constant() == pytest.approx(2.6220575542921198, abs=1e-14)


def test_integrate_constant():
    r = integrate_line(lambda z: 1.0, 0, 1)
    assert r.value == pytest.approx(1.0, abs=1e-15)
    assert r.error_estimate <= 1e-12


def test_integrate_singular_endpoint():
    r = integrate_line(lambda t: 1 / np.sqrt(1 - t ** 4), 0, 1, tol=1e-13, singular="end")
    assert r.value.real == pytest.approx(math.pi / (2 * agm(1, math.sqrt(2))), abs=1e-12)
    assert r.error_estimate <= 1e-13
    # same integral run backwards with the singular start
    r2 = integrate_line(lambda t: 1 / np.sqrt(1 - t ** 4), 1, 0, tol=1e-13, singular="start")
    assert r2.value.real == pytest.approx(-r.value.real, abs=1e-12)


def test_integrate_diagonal_ray():
    r = 0.5
    w = cmath.exp(1j * math.pi / 4)
    along = integrate_line(lambda z: 1 / np.sqrt(1 + z ** 4), 0, r * w, tol=1e-14)
    real = integrate_line(lambda t: 1 / np.sqrt(1 - t ** 4), 0, r, tol=1e-14)
    assert abs(along.value - w * real.value) < 1e-13


def test_integrate_budget_exhausted():
    with pytest.raises(ConvergenceError):
        integrate_line(lambda t: np.sin(1 / (t + 1e-3)), 0, 1, tol=1e-14, max_panels=5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=KRONROD_DEGREE + 1))
def test_integrate_polynomial_exactness(coeffs):
    p = np.polynomial.Polynomial(coeffs)
    exact = p.integ()(1.0) - p.integ()(0.0)
    got = integrate_line(lambda t: p(t.real), 0, 1, tol=1e-10).value
    assert abs(got - exact) <= 1e-14 * max(1.0, np.abs(coeffs).sum())


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=1, max_size=8),
    st.lists(st.floats(-5, 5), min_size=1, max_size=8),
    st.floats(-3, 3), st.floats(-3, 3),
    st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
)
def test_integrate_linearity(cf, cg, alpha, beta, z1):
    f = np.polynomial.Polynomial(cf)
    g = np.polynomial.Polynomial(cg)
    tol = 1e-11
    If = integrate_line(lambda z: f(z), 0, z1, tol=tol).value
    Ig = integrate_line(lambda z: g(z), 0, z1, tol=tol).value
    Ih = integrate_line(lambda z: alpha * f(z) + beta * g(z), 0, z1, tol=tol).value
    scale = max(1.0, abs(alpha * If), abs(beta * Ig))
    assert abs(Ih - (alpha * If + beta * Ig)) <= 2 * tol + 1e-14 * scale


def test_newton_trivial():
    assert abs(newton_complex(lambda z: z, lambda z: 1, 0.3 + 0.1j)) <= 1e-13
    assert newton_complex(lambda z: z * z - 1, lambda z: 2 * z, 0.9) == pytest.approx(1.0, abs=1e-13)


def _F(w):
    return integrate_line(lambda z: 1 / np.sqrt(1 + z ** 4), 0, w, tol=1e-14).value if w else 0j


def test_newton_roundtrip_through_quadrature():
    target = _F(0.5j)
    z = newton_complex(lambda w: _F(w) - target, lambda w: 1 / cmath.sqrt(1 + w ** 4), 0.4j)
    assert abs(z - 0.5j) <= 1e-12


def test_newton_roundtrip_random():
    rng = np.random.default_rng(11)
    inside = lambda w: abs(w) < 1
    for _ in range(100):
        z = complex(0.9 * math.sqrt(rng.random()) * cmath.exp(2j * math.pi * rng.random()))
        target = _F(z)
        got = newton_complex(lambda w: _F(w) - target, lambda w: 1 / cmath.sqrt(1 + w ** 4),
                             target, tol=1e-13, inside=inside)
        assert abs(got - z) <= 1e-10


def test_newton_reports_last_iterate():
    with pytest.raises(ConvergenceError) as info:
        newton_complex(lambda z: z * z + 1, lambda z: 2 * z, 0.5, max_iter=3)
    assert info.value.last is not None
    assert len(info.value.history) == 4
