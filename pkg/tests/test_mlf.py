import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from fracspde import mlf
from fracspde.mlf import FractionalOrder, gamma, ml_bounds, ml_neg

BETAS = [0.1 * k for k in range(1, 10)]
XS = [0.0] + [10.0**e for e in range(-3, 4)]


def ml_oracle(beta, x):
    """Extended-precision reference for E_beta(-x).

    The alternating power series loses about ``x**(1/beta) / ln 10`` digits to
    cancellation, so it is summed with that many extra digits when affordable;
    otherwise the real-line integral representation is evaluated by mpmath
    quadrature at 40 digits.
    """
    z = x ** (1.0 / beta)
    if z < 250:
        dps = int(z / math.log(10)) + 40
        with mpmath.workdps(dps):
            b, y = mpmath.mpf(beta), -mpmath.mpf(x)
            total, k = mpmath.mpf(0), 0
            while True:
                term = y**k / mpmath.gamma(1 + b * k)
                total += term
                if k > 2 * z + 20 and abs(term) < mpmath.mpf(10) ** (-30):
                    return float(total)
                k += 1
    with mpmath.workdps(40):
        b, y = mpmath.mpf(beta), mpmath.mpf(x)
        c = mpmath.cos(b * mpmath.pi)
        f = lambda w: mpmath.exp(-w ** (1 / b)) * y / (w * w + 2 * w * y * c + y * y)
        val = mpmath.quad(f, [0, y / 4, y, 4 * y, mpmath.inf])
        return float(mpmath.sin(b * mpmath.pi) / (b * mpmath.pi) * val)


def test_fractional_order_rejects_endpoints():
    for bad in (0.0, 1.0, -0.2, 1.3, float("nan")):
        with pytest.raises(ValueError):
            FractionalOrder(bad)
    assert FractionalOrder.classical().value == 1.0
    assert FractionalOrder(0.3).value == 0.3


@pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, 1.7724538509055159), (4.0, 6.0)])
def test_gamma_values(x, expected):
    assert gamma(x) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_gamma_rejects_nonpositive(x):
    with pytest.raises(ValueError):
        gamma(x)


def test_ml_examples():
    assert ml_neg(0.7, 0.0) == 1.0
    assert ml_neg(1.0, 1.0) == pytest.approx(0.3678794412, abs=1e-10)
    assert ml_neg(0.5, 1.0) == pytest.approx(0.4275835762, abs=1e-10)


@pytest.mark.parametrize("x", [0.1, 1.0, 2.0, 5.0, 20.0])
def test_half_order_erfc_identity(x):
    # E_{1/2}(-x) = exp(x^2) erfc(x), computed via the scaled complementary error function
    assert ml_neg(0.5, x) == pytest.approx(special.erfcx(x), rel=1e-12)


@pytest.mark.parametrize("beta", [0.1, 0.25, 0.5, 0.75, 0.9])
@pytest.mark.parametrize("x", [1e-3, 0.5, 1.4, 1.6, 3.0, 7.0, 15.0])
def test_ml_against_extended_precision_series(beta, x):
    assert ml_neg(beta, x) == pytest.approx(ml_oracle(beta, x), rel=1e-10)


def test_bounds_examples():
    b = ml_bounds(0.5, 0.0)
    assert (b.lower, b.upper) == (1.0, 1.0)
    b = ml_bounds(0.5, 2.0)
    assert b.lower == pytest.approx(1 / (1 + math.sqrt(math.pi) * 2), rel=1e-14)
    assert b.upper == pytest.approx(1 / (1 + 2 / (math.sqrt(math.pi) / 2)), rel=1e-14)
    assert round(b.lower, 4) == 0.2200 and round(b.upper, 4) == 0.3071
    assert b.contains(ml_neg(0.5, 2.0))
    assert round(ml_neg(0.5, 2.0), 4) == 0.2554


def test_bounds_reject_classical():
    with pytest.raises(ValueError):
        ml_bounds(1.0, 1.0)


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        ml_neg(0.5, -1.0)


def test_envelope_on_grid():
    for b in BETAS:
        vals = [ml_neg(b, x) for x in XS]
        for x, v in zip(XS, vals):
            env = ml_bounds(b, x)
            assert env.lower - 1e-12 <= v <= env.upper + 1e-12
            assert 0 < v <= 1
        assert all(a >= c for a, c in zip(vals, vals[1:]))


def test_classical_limit_is_exponential():
    xs = np.linspace(0, 50, 101)
    assert np.allclose(ml_neg(1.0, xs), np.exp(-xs), rtol=1e-10, atol=0)


@pytest.mark.parametrize("beta", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_continuity_across_switch(beta):
    xs = mlf.SERIES_SWITCH**beta
    lo, hi = xs * (1 - 1e-9), xs * (1 + 1e-9)
    assert abs(ml_neg(beta, lo) - ml_neg(beta, hi)) <= 1e-9


@given(st.floats(0.05, 0.95), st.floats(0.0, 500.0), st.floats(0.0, 500.0))
def test_monotone_and_enveloped(beta, x, y):
    a, b = sorted((x, y))
    va, vb = ml_neg(beta, a), ml_neg(beta, b)
    assert vb <= va + 1e-14
    env = ml_bounds(beta, b)
    assert env.lower - 1e-12 <= vb <= env.upper + 1e-12


def test_subordinator_density_closed_form():
    # at beta = 1/2 the density is half-normal with variance 2t
    for t in (0.5, 1.0, 2.0):
        for s in (0.1, 1.0, 3.0):
            ref = math.exp(-s * s / (4 * t)) / math.sqrt(math.pi * t)
            assert mlf.subordinator_density_half(t, s) == pytest.approx(ref, rel=1e-13)
            assert mlf.subordinator_density_half(t, s) >= 0


def test_subordinator_normalization_and_laplace():
    assert mlf.subordinator_mass_half(1.0) == pytest.approx(1.0, abs=1e-6)
    assert mlf.subordinator_laplace_half(1.0, 1.0) == pytest.approx(0.4275835762, abs=1e-6)


@pytest.mark.parametrize("t, s", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_subordinator_rejects_nonpositive(t, s):
    with pytest.raises(ValueError):
        mlf.subordinator_density_half(t, s)
