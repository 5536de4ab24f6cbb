from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import comb

from greenlab.errors import Divergent
from greenlab.groups import lattice_factor, lazy_product_lattice, product_lattice, srw_lattice
from greenlab.lattice import (
    exact_returns,
    lattice_brute_returns,
    lattice_green_eval,
    lattice_return_series,
    local_clt_constants,
    tilt_mgf,
)


def test_srw_line_returns_are_central_binomials():
    f = srw_lattice(1, 1)
    seq = lattice_return_series(f, 40).coeffs
    for n in range(0, 41, 2):
        assert seq[n] == pytest.approx(comb(n, n // 2, exact=True) / 2.0**n, rel=1e-13)
    assert np.all(seq[1::2] == 0)


@pytest.mark.parametrize(
    "f",
    [
        srw_lattice(1, 2),
        product_lattice(1, 2, {1: 0.5, -1: 0.5}),
        lazy_product_lattice(1, 3, 0.2),
        lattice_factor(1, 2, [((1, 1), 0.2), ((-1, -1), 0.2), ((1, 0), 0.3), ((-1, 0), 0.3)]),
    ],
)
def test_methods_agree_with_brute_force(f):
    brute = lattice_brute_returns(f, 16)
    seq, method, _ = exact_returns(f, 16)
    assert np.allclose(seq, brute, rtol=1e-12, atol=1e-15), method


def test_axis_and_torus_routes_agree():
    f = srw_lattice(1, 2)
    a, _, _ = exact_returns(f, 200, method="axis")
    t, _, wrap = exact_returns(f, 200, method="torus")
    assert np.max(np.abs(a - t)) < 1e-13 + wrap


def test_green_value_srw_z3_matches_watson():
    # Watson's integral: G(1) for SRW on Z^3
    watson = 1.5163860591519780
    got = lattice_green_eval(srw_lattice(1, 3), 1.0)[0]
    assert got.value == pytest.approx(watson, rel=1e-6)
    assert got.err < 1e-5


def test_divergent_derivatives_are_modelled():
    vals = lattice_green_eval(srw_lattice(1, 3), 1.0, max_deriv=2)
    assert isinstance(vals[1], Divergent) and vals[1].model == "inv_sqrt"
    vals = lattice_green_eval(srw_lattice(1, 4), 1.0, max_deriv=1)
    assert isinstance(vals[1], Divergent) and vals[1].model == "log"


def test_derivatives_against_differences():
    f = lazy_product_lattice(1, 5, 0.2)
    s, h = 0.7, 1e-5
    g = [v.value for v in lattice_green_eval(f, s, max_deriv=1)]
    gp = lattice_green_eval(f, s + h)[0].value
    gm = lattice_green_eval(f, s - h)[0].value
    assert g[1] == pytest.approx((gp - gm) / (2 * h), rel=1e-7)


def test_local_clt_constant_consistent():
    for f in (srw_lattice(1, 2), product_lattice(1, 5, {1: 0.5, -1: 0.5}), lazy_product_lattice(1, 5, 0.3)):
        asy = local_clt_constants(f)
        assert asy.consistent


def test_tilt_mgf_closed_form():
    f = srw_lattice(1, 2)
    u = (0.3, -0.2)
    assert tilt_mgf(f, u) == pytest.approx(0.5 * (math.cosh(0.3) + math.cosh(0.2)), rel=1e-14)
