import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfc, rgamma

from fracdn.mlf import (
    MLQuery,
    MLSeriesWarning,
    check_bound_es0,
    ml,
    ml_asymptotic,
    ml_contour,
    ml_series,
    ml_with_info,
)


def mp_series(alpha, beta, z, dps=None):
    """Extended-precision power series, used only as a test oracle."""
    dps = dps or int(40 + abs(z) ** (1 / alpha) / 2.3)
    with mpmath.workdps(dps):
        z = mpmath.mpmathify(z)
        s, k = mpmath.mpf(0), 0
        while True:
            term = z**k * mpmath.rgamma(alpha * k + beta)
            s += term
            if k > 10 and abs(term) < mpmath.mpf(10) ** (-dps + 5):
                break
            k += 1
        return complex(s)


# -- worked examples ----------------------------------------------------------


@pytest.mark.parametrize("alpha,beta", [(0.5, 0.5), (1.0, 1.0), (0.3, 2.2), (1.7, 1.0)])
def test_value_at_origin_is_reciprocal_gamma(alpha, beta):
    assert ml(alpha, beta, 0.0) == pytest.approx(float(rgamma(beta)), abs=1e-15)


def test_exponential_case():
    assert ml(1.0, 1.0, 1.0) == pytest.approx(math.e, rel=1e-15)


@pytest.mark.parametrize("alpha,beta,z", [(0.5, 0.5, -1.0), (0.7, 0.7, -3.0), (0.9, 1.3, 2.5 + 1j), (1.5, 1.5, -8.0)])
def test_against_extended_precision_series(alpha, beta, z):
    ref = mp_series(alpha, beta, z)
    assert abs(complex(ml(alpha, beta, complex(z))) - ref) <= 1e-13 * max(1.0, abs(ref))


def test_half_order_closed_form_large_argument():
    # E_{1/2,1}(-x) = exp(x^2) erfc(x), written stably through mpmath
    for x in (5.0, 40.0, 1e4):
        ref = float(mpmath.exp(mpmath.mpf(x) ** 2) * mpmath.erfc(x))
        assert ml(0.5, 1.0, -x) == pytest.approx(ref, rel=1e-8)


def test_half_order_closed_form_moderate():
    x = np.linspace(-3, 3, 25)
    with np.errstate(over="ignore"):
        ref = np.exp(x**2) * erfc(-x)
    assert np.max(np.abs(ml(0.5, 1.0, x) - ref) / np.abs(ref)) < 1e-12


def test_asymptotic_leading_term_vanishes_when_alpha_equals_beta():
    # 1/Gamma(0) = 0, so the first algebraic term drops out
    z = np.array([-1e3])
    one = ml_asymptotic(0.6, 0.6, z, n_terms=1)
    assert np.all(one == 0)


def test_exponential_negligible_far_left():
    # accuracy is absolute on this route: e^-50 is resolved as zero
    assert abs(ml(1.0, 1.0, -50.0) - math.exp(-50.0)) < 1e-15


def test_asymptotic_rejects_forbidden_sector():
    with pytest.raises(ValueError):
        ml_asymptotic(0.5, 1.0, np.array([100.0 + 1j]))
    with pytest.raises(ValueError):
        ml_asymptotic(0.5, 1.0, np.array([-5.0]))


def test_series_rejects_large_radius():
    with pytest.raises(ValueError):
        ml_series(0.5, 1.0, np.array([50.0]))


def test_unconverged_series_warns():
    with pytest.warns(MLSeriesWarning):
        ml_series(0.5, 1.0, np.array([-9.0]), n_terms=5)


@pytest.mark.parametrize("alpha,beta", [(0.0, 1.0), (-0.5, 1.0), (0.5, 0.0), (2.5, 1.0)])
def test_invalid_orders(alpha, beta):
    with pytest.raises(ValueError):
        ml(alpha, beta, -1.0)


def test_query_validates():
    with pytest.raises(ValueError):
        MLQuery(-1.0, 1.0, 0.0)
    assert MLQuery(0.5, 1.0, 1j).z == 1j


def test_bound_constant_heat_case():
    holds, c = check_bound_es0(1.0, 1.0, np.geomspace(1e-3, 1e4, 2000))
    assert holds and c <= 1.01


# -- routing ------------------------------------------------------------------


@pytest.mark.parametrize("alpha,beta", [(0.4, 1.0), (0.8, 0.8), (1.3, 1.0), (1.8, 2.0)])
def test_routes_agree_near_series_boundary(alpha, beta):
    # points the dispatcher sends to the series, up to the edge of its domain
    z = np.concatenate([np.linspace(-10, 4, 57), 10 * np.exp(1j * np.linspace(0.1, 3.0, 12))])
    _, m, _ = ml_with_info(alpha, beta, z)
    z = z[m == 0]
    assert z.size > 10
    s = ml_series(alpha, beta, z)
    c = ml_contour(alpha, beta, z)
    assert np.max(np.abs(s - c) / np.maximum(1, np.abs(c))) <= 1e-10


@pytest.mark.parametrize("alpha", [0.3, 0.6, 0.9])
def test_asymptotic_agrees_with_contour(alpha):
    z = np.array([-50.0, -80.0 + 20j])
    a = ml_asymptotic(alpha, 1.0, z, n_terms=25)
    c = ml_contour(alpha, 1.0, z)
    assert np.max(np.abs(a - c)) <= 1e-10


def test_dispatcher_continuity_across_radius():
    r = np.array([10.0 - 1e-9, 10.0 + 1e-9])
    for alpha in (0.5, 0.9, 1.5):
        v = ml(alpha, 1.0, -r)
        assert abs(v[0] - v[1]) <= 1e-10


def test_info_reports_routes():
    _, m, e = ml_with_info(0.5, 1.0, np.array([-0.5, -1e4, -20.0]))
    assert m[0] == 0 and m[1] == 1
    assert np.all(e >= 0)


def test_real_in_real_out():
    assert np.isrealobj(ml(0.5, 1.0, np.array([-1.0, 2.0])))
    assert np.iscomplexobj(ml(0.5, 1.0, np.array([-1.0 + 0j])))


# -- properties ---------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(0.2, 1.9),
    beta=st.floats(0.2, 3.0),
    re=st.floats(-40, 5),
    im=st.floats(-10, 10),
)
def test_recurrence(alpha, beta, re, im):
    z = complex(re, im)
    lhs = ml(alpha, beta, z)
    rhs = float(rgamma(beta)) + z * ml(alpha, alpha + beta, z)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs), abs(z * ml(alpha, alpha + beta, z)))


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.1, 1.0), x=st.floats(0.0, 200.0), dx=st.floats(1e-3, 50.0))
def test_completely_monotone_decay(alpha, x, dx):
    a, b = ml(alpha, 1.0, -x), ml(alpha, 1.0, -(x + dx))
    assert 0 < b <= a + 1e-14


@pytest.mark.parametrize("alpha", [0.5, 1.5])
@pytest.mark.parametrize("lam", [1.0, 10.0])
@pytest.mark.parametrize("t", [0.5, 2.0])
def test_time_derivative_identity(alpha, lam, t):
    # d/dt E_{a,1}(-lam t^a) = -lam t^(a-1) E_{a,a}(-lam t^a)
    d = 1e-5 * t
    f = lambda s: ml(alpha, 1.0, -lam * s**alpha)
    fd = (f(t + d) - f(t - d)) / (2 * d)
    exact = -lam * t ** (alpha - 1) * ml(alpha, alpha, -lam * t**alpha)
    assert abs(fd - exact) <= 1e-5 * max(1.0, abs(exact))
