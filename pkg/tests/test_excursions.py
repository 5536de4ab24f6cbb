from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab.errors import Divergent, NoFixedPoint
from greenlab.excursions import (
    boundary_ladder,
    classify_samples,
    first_return_kernel,
    green_derivatives_at,
    green_jet,
    green_series,
    green_value,
    kernel_t_jet,
    lazified,
    locate_radius,
    solve_excursions,
)
from greenlab.groups import brute_force_return_sequence
from greenlab.lattice import GreenValue
from greenlab.scenarios import free_group, product_pair, random_oracle_walk

R_FREE = 2.0 / math.sqrt(3.0)


def tree_green(z):
    # SRW on the 4-regular tree
    return 3.0 / (1.0 + math.sqrt(max(4.0 - 3.0 * z * z, 0.0)))


def test_free_group_radius_and_boundary():
    info = locate_radius(free_group())
    assert abs(info.R - R_FREE) < 1e-12
    assert info.boundary == "branch_point" and info.contact == ()
    assert abs(info.coefficient_R - R_FREE) < 10 * info.coefficient_uncertainty + 1e-6


def test_free_group_fixed_point():
    w = free_group()
    s = solve_excursions(w, r=1.0)
    assert np.allclose(s.e, 1.0 / 6.0, atol=1e-14)
    assert s.green == pytest.approx(1.5, abs=1e-14)
    assert s.residual < 1e-14
    for z in (0.3, 0.9, 1.1, R_FREE):
        assert green_value(w, z) == pytest.approx(tree_green(z), rel=1e-13)


def test_beyond_radius_has_no_fixed_point():
    with pytest.raises(NoFixedPoint):
        solve_excursions(free_group(), r=1.2)


def test_series_mode_matches_closed_form():
    g = green_series(free_group(), 512)
    x = np.linspace(0.1, 0.9, 5) * R_FREE
    for z in x:
        assert g.evaluate(z) == pytest.approx(tree_green(z), rel=1e-12)


def test_series_matches_brute_force_small_n():
    rng = np.random.default_rng(11)
    w = random_oracle_walk(rng)
    b = brute_force_return_sequence(w, 10)
    g = green_series(w, 16).raw()[:11]
    nz = b > 0
    assert np.max(np.abs(g[nz] - b[nz]) / b[nz]) < 1e-9
    assert np.all(np.abs(g[~nz]) < 1e-14)


def test_jets_against_differences():
    w = product_pair(5, 0.9)
    R = locate_radius(w, cross_check=False).R
    r, h = 0.8 * R, 1e-5 * R
    j = green_jet(w, r, 2)
    fd1 = (green_value(w, r + h) - green_value(w, r - h)) / (2 * h)
    fd2 = (green_value(w, r + h) - 2 * green_value(w, r) + green_value(w, r - h)) / h**2
    assert j[0] == pytest.approx(green_value(w, r), rel=1e-13)
    assert j[1] == pytest.approx(fd1, rel=1e-7)
    assert j[2] == pytest.approx(fd2, rel=1e-4)


def test_kernel_jet_at_t_one_is_kernel_green():
    w = free_group(0.4)
    R = locate_radius(w, cross_check=False).R
    r = 0.7 * R
    ker = first_return_kernel(w, 1, r)
    assert kernel_t_jet(w, 1, r, 1)[0] == pytest.approx(ker.green((0,), (0,)), rel=1e-12)


def test_first_return_kernel_validated_by_paths():
    w = free_group(0.5)
    ker = first_return_kernel(w, 1, 0.6 * R_FREE, validate=True, L=12)
    assert ker.provenance == "brute-force-validated"
    assert ker.mass < 1.0


def test_boundary_derivatives_free_group():
    gd = green_derivatives_at(free_group(), R_FREE, 2)
    assert isinstance(gd[0], GreenValue) and gd[0].value == pytest.approx(3.0, rel=1e-12)
    assert isinstance(gd[1], Divergent) and gd[1].model == "inv_sqrt"


def test_convergent_family_has_finite_first_derivative():
    w = product_pair(5, 0.9)
    R = locate_radius(w, cross_check=False).R
    gd = green_derivatives_at(w, R, 2)
    assert isinstance(gd[1], GreenValue)
    assert isinstance(gd[2], Divergent) and gd[2].model == "inv_sqrt"


def test_classify_samples_models():
    R = 1.0
    r = boundary_ladder(R)
    h = R - r
    entry, _ = classify_samples(list(zip(r, 2.0 - np.sqrt(h))), R)
    assert isinstance(entry, GreenValue) and entry.value == pytest.approx(2.0, abs=1e-6)
    entry, _ = classify_samples(list(zip(r, 1.0 / np.sqrt(h) + 3.0)), R)
    assert isinstance(entry, Divergent) and entry.model == "inv_sqrt"
    entry, _ = classify_samples(list(zip(r, np.log(1.0 / h))), R)
    assert isinstance(entry, Divergent) and entry.model == "log"


def test_lazification_identity_small():
    w = free_group(0.6)
    R = locate_radius(w, cross_check=False).R
    a = 0.2
    wl = lazified(w, a)
    for t in np.linspace(0.1, 0.95, 6) * R / (1 - a + a * R):
        rhs = green_value(w, (1 - a) * t / (1 - a * t)) / (1 - a * t)
        assert green_value(wl, t) == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.15, 0.85), st.floats(0.0, 0.5))
def test_radius_symmetric_in_factor_order(alpha, beta):
    w = free_group(alpha, beta)
    R1 = locate_radius(w, cross_check=False).R
    R2 = locate_radius(w.permuted([1, 0]), cross_check=False).R
    assert R1 == pytest.approx(R2, rel=1e-13)
    # laziness maps radii by R -> R / (1 - b + b R) relative to the non-lazy walk
    R0 = locate_radius(free_group(alpha), cross_check=False).R
    assert R1 == pytest.approx(R0 / (1 - beta + beta * R0), rel=1e-12)


@settings(max_examples=8, deadline=None)
@given(st.lists(st.floats(0.05, 0.99), min_size=2, max_size=5))
def test_green_is_increasing(fracs):
    w = free_group(0.3)
    R = locate_radius(w, cross_check=False).R
    xs = sorted(set(fracs))
    vals = [green_value(w, f * R) for f in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
