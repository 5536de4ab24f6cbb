from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab.errors import Reducible, RouteMismatch
from greenlab.scenarios import free_group, product_pair
from greenlab.strip import (
    StripKernel,
    affine_family,
    degeneracy_test,
    dominant_eigen,
    growth_estimate,
    minimize_lambda,
    random_strip_kernel,
    rho_curve,
    scalar_srw,
    strip_asymptotics,
    strip_local_limit_check,
    tilted_matrix,
)


def test_minimize_lambda_closed_form():
    K = StripKernel(1, 1, {(0, 0): {(1,): 0.4, (-1,): 0.1}})
    u, rho = minimize_lambda(K)
    assert u[0] == pytest.approx(0.5 * math.log(0.25), abs=1e-9)
    assert rho == pytest.approx(0.4, abs=1e-12)


def test_dominant_eigen_normalization():
    et = dominant_eigen(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert et.lam == pytest.approx(1.0)
    assert et.nu @ et.C == pytest.approx(1.0)
    assert np.allclose(et.C, et.C[0]) and np.allclose(et.nu, et.nu[0])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2), st.integers(1, 3), st.booleans())
def test_eigen_triple_invariants(seed, d, N, sym):
    rng = np.random.default_rng(seed)
    K = random_strip_kernel(rng, d, N, symmetric=sym)
    u = rng.normal(scale=0.5, size=d)
    F = tilted_matrix(K, u)
    lam, C, nu = dominant_eigen(F)
    assert np.allclose(F @ C, lam * C, rtol=1e-10, atol=1e-12)
    assert np.allclose(nu @ F, lam * nu, rtol=1e-10, atol=1e-12)
    assert nu @ C == pytest.approx(1.0, abs=1e-12)
    assert np.all(C > 0) and np.all(nu > 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2), st.integers(1, 3))
def test_lambda_midpoint_convex(seed, d, N):
    rng = np.random.default_rng(seed)
    K = random_strip_kernel(rng, d, N, symmetric=bool(seed % 2))
    a, b = rng.normal(size=d), rng.normal(size=d)
    lam = lambda u: dominant_eigen(tilted_matrix(K, u)).lam  # noqa: E731
    assert lam(0.5 * (a + b)) <= 0.5 * (lam(a) + lam(b)) + 1e-12


def test_growth_matches_minimized_eigenvalue():
    rng = np.random.default_rng(7)
    for d, N in ((1, 2), (1, 3), (2, 2)):
        K = random_strip_kernel(rng, d, N, symmetric=False)
        _, rho = minimize_lambda(K)
        g, _ = growth_estimate(K)
        assert abs(rho - g) < 1e-3


def test_rho_curve_routes_agree():
    rng = np.random.default_rng(3)
    K0 = random_strip_kernel(rng, 1, 2, symmetric=False).scaled(0.5)
    K1 = random_strip_kernel(rng, 1, 2, symmetric=False).scaled(0.3)
    fam, dfam = affine_family(K0, K1)
    pts = rho_curve(fam, [0.5, 1.0, 1.5], dfam)
    assert all(p.mismatch < 1e-6 and p.rho_prime_eigen > 0 for p in pts)
    assert pts[0].rho < pts[1].rho < pts[2].rho
    with pytest.raises(ValueError):
        rho_curve(fam, [1.0, 0.5])


def test_rho_curve_detects_wrong_derivative():
    rng = np.random.default_rng(4)
    K0 = random_strip_kernel(rng, 1, 1)
    K1 = random_strip_kernel(rng, 1, 1)
    fam, _ = affine_family(K0, K1)
    with pytest.raises(RouteMismatch):
        rho_curve(fam, [1.0], lambda r: K1.scaled(2.0))


def test_symmetric_asymptotics_have_no_drift():
    rng = np.random.default_rng(5)
    K = random_strip_kernel(rng, 2, 2)
    asy = strip_asymptotics(K)
    assert np.allclose(asy.beta, 0.0, atol=1e-8)
    assert np.all(np.linalg.eigvalsh(asy.Sigma) > 0)


def test_local_limit_scalar_srw():
    tr = strip_local_limit_check(scalar_srw(), n_max=2048)
    assert tr.monotone_dyadic
    assert tr.sup[tr.n <= 2000][-1] < 0.05


def test_local_limit_planar_strip_decreases():
    K = random_strip_kernel(np.random.default_rng(8), 2, 2)
    tr = strip_local_limit_check(K, n_max=256)
    assert tr.monotone_dyadic


def test_reducible_kernel_rejected():
    K = StripKernel(1, 2, {(0, 0): {(1,): 0.5, (-1,): 0.5}})
    with pytest.raises(Reducible):
        strip_asymptotics(K)


def test_degeneracy_free_group_not_degenerate():
    res = degeneracy_test(free_group(), 1)
    # rho_1(R) = R/2 + E_2(R) with R = 2/sqrt(3), E_2(R) = 1/3
    assert not res.degenerate
    assert res.rho_R == pytest.approx(1 / math.sqrt(3) + 1 / 3, abs=1e-8)


def test_degeneracy_contact_in_rank_five_pair():
    res = degeneracy_test(product_pair(5, 0.9), 1)
    assert res.degenerate and abs(res.margin) <= res.uncertainty
    assert not res.flagged


def test_margin_continuous_in_weight():
    m = [degeneracy_test(free_group(a), 1).margin for a in (0.4, 0.45, 0.5)]
    assert abs(m[1] - m[0]) < 10 * 0.05 and abs(m[2] - m[1]) < 10 * 0.05
