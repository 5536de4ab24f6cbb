from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab import config
from greenlab.errors import (
    IncompatibleRescale,
    InsufficientCoefficients,
    NonInvertibleConstantTerm,
    NonNilpotentInner,
)
from greenlab.series import (
    Series,
    coefficient_exponent_fit,
    compose_many,
    radius_estimate,
    series_ring_ops,
    singularity_model_fit,
)

coef = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)


def series_st(order=12, unit=False):
    def build(c):
        c = list(c)
        if unit:
            c[0] = 1.0 + abs(c[0])
        return Series(c, 1.0)

    return st.lists(coef, min_size=order + 1, max_size=order + 1).map(build)


def close(a: Series, b: Series, tol=1e-10):
    scale = 1.0 + max(np.max(np.abs(a.coeffs)), np.max(np.abs(b.coeffs)))
    return np.max(np.abs(a.coeffs - b.coeffs)) <= tol * scale


@settings(max_examples=60, deadline=None)
@given(series_st(), series_st(), series_st())
def test_ring_laws(a, b, c):
    assert close(a + b, b + a)
    assert close(a * b, b * a)
    assert close((a * b) * c, a * (b * c), 1e-9)
    assert close(a * (b + c), a * b + a * c, 1e-9)
    assert close(a - a, Series.constant(0.0, a.order))


@settings(max_examples=60, deadline=None)
@given(series_st(unit=True))
def test_reciprocal_is_inverse(a):
    one = a * a.reciprocal()
    expect = Series.constant(1.0, a.order)
    assert close(one, expect, 1e-8)


@settings(max_examples=40, deadline=None)
@given(series_st(10), series_st(10), series_st(10))
def test_composition_associates_with_products(f, g, inner):
    c = inner.coeffs.copy()
    c[0] = 0.0
    inner = Series(c * 0.5, 1.0)
    fg = (f * g).compose(inner)
    assert close(fg, f.compose(inner) * g.compose(inner), 1e-8)
    both = compose_many([f, g], inner)
    assert close(both[0], f.compose(inner), 1e-12)
    assert close(both[1], g.compose(inner), 1e-12)


@settings(max_examples=40, deadline=None)
@given(series_st(10), series_st(10))
def test_derivative_is_a_derivation(a, b):
    lhs = (a * b).differentiate()
    rhs = a.differentiate() * b.truncate(a.order - 1) + a.truncate(a.order - 1) * b.differentiate()
    assert close(lhs, rhs, 1e-9)


def test_geometric_series_reciprocal():
    one_minus = Series([1.0, -1.0] + [0.0] * 30)
    assert np.allclose(one_minus.reciprocal().coeffs, 1.0)


def test_rescale_mismatch_and_invertibility():
    with pytest.raises(IncompatibleRescale):
        Series([1, 2], 1.0) + Series([1, 2], 2.0)
    with pytest.raises(NonInvertibleConstantTerm):
        Series([0.0, 1.0]).reciprocal()
    with pytest.raises(NonNilpotentInner):
        Series([1.0, 1.0]).compose(Series([0.5, 1.0]))


def test_dispatch_matches_operators():
    a, b = Series([1.0, 2.0, 3.0]), Series([2.0, -1.0, 0.5])
    assert close(series_ring_ops(a, b, "add"), a + b)
    assert close(series_ring_ops(a, b, "mul"), a * b)
    assert close(series_ring_ops(a, None, "reciprocal"), a.reciprocal())
    with pytest.raises(ValueError):
        series_ring_ops(a, b, "pow")


def test_raw_roundtrip_and_csv(tmp_path):
    a = np.array([1.0, 0.5, 0.25, 0.125])
    s = Series.from_raw(a, 2.0)
    assert np.allclose(s.coeffs, 1.0)
    assert np.allclose(s.raw(), a)
    p = tmp_path / "s.csv"
    s.to_csv(p)
    t = Series.from_csv(p)
    assert np.array_equal(t.coeffs, s.coeffs) and t.rescale == s.rescale


def test_dd_products_are_not_worse():
    rng = np.random.default_rng(3)
    a = Series(rng.standard_normal(400))
    b = Series(rng.standard_normal(400))
    plain = (a * b).coeffs
    with config.precision("dd"):
        comp = (a * b).coeffs
    exact = np.array([math.fsum(a.coeffs[k] * b.coeffs[n - k] for k in range(n + 1)) for n in range(400)])
    assert np.max(np.abs(comp - exact)) <= np.max(np.abs(plain - exact)) + 1e-300
    assert np.max(np.abs(comp - exact)) < 1e-13


# -- oracles with closed forms ------------------------------------------------

def _central_binomial(N):
    # 1/sqrt(1 - 4x) has coefficients binom(2n, n); radius 1/4, kappa = 1/2
    b = np.ones(N + 1)
    for n in range(1, N + 1):
        b[n] = b[n - 1] * (2 * n - 1) / (2 * n)  # rescaled by 4^n
    return Series(b, 0.25)


def test_radius_estimate_on_closed_form():
    est = radius_estimate(_central_binomial(2048))
    assert abs(est.R - 0.25) < 1e-6
    with pytest.raises(InsufficientCoefficients):
        radius_estimate(Series(np.ones(20)))


def test_exponent_fit_on_closed_form():
    fit = coefficient_exponent_fit(_central_binomial(2048), 0.25)
    assert abs(fit.kappa - 0.5) < 1e-3


def test_exponent_fit_on_three_halves():
    # Catalan-like: (1 - sqrt(1 - 4x)) / (2x) has kappa = 3/2
    N = 2048
    b = np.ones(N + 1)
    for n in range(1, N + 1):
        b[n] = b[n - 1] * 2 * (2 * n - 1) / (n + 1) / 4
    fit = coefficient_exponent_fit(Series(b, 0.25), 0.25)
    assert abs(fit.kappa - 1.5) < 2e-3


@pytest.mark.parametrize(
    "name,func",
    [
        ("inv_sqrt", lambda h: 2.0 / np.sqrt(h) + 1.0 + 0.3 * np.sqrt(h)),
        ("log", lambda h: 1.5 * np.log(1 / h) + 0.7 + h),
        ("bounded", lambda h: 3.0 - 2.0 * np.sqrt(h) + h),
    ],
)
def test_singularity_models_identified(name, func):
    R = 1.0
    r = R * (1 - 10 ** -np.linspace(2, 6, 17))
    fit = singularity_model_fit(list(zip(r, func(R - r))), R, models=("inv_sqrt", "log", "bounded"))
    assert fit.best == name
