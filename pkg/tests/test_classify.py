from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab.classify import (
    VERDICT_CONVERGENT,
    VERDICT_DIVERGENT,
    _i_values,
    _j_values,
    cascade,
    classify_walk,
    compute_functionals,
    ij_ratio_monitor,
    plateau_check,
    verify_exponent,
)
from greenlab.errors import Divergent
from greenlab.excursions import green_value, locate_radius
from greenlab.lattice import GreenValue
from greenlab.scenarios import free_group, product_pair
from greenlab.series import Series

R_FREE = 2.0 / np.sqrt(3.0)


def test_cascade_at_origin_is_constant():
    s = Series([1.0, 0.3, 0.2, 0.1], 1.0)
    assert np.allclose(cascade(s, 0.0, 3), 1.0)


def test_first_functional_is_derivative_of_rG():
    w = free_group()
    r, h = 0.8, 1e-5
    fd = ((r + h) * green_value(w, r + h) - (r - h) * green_value(w, r - h)) / (2 * h)
    assert _i_values(w, r, 1)[0] == pytest.approx(fd, rel=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(0.1, 0.99))
def test_factor_functionals_below_total(alpha, frac):
    w = free_group(alpha)
    R = locate_radius(w, cross_check=False).R
    r = frac * R
    I = _i_values(w, r, 3)
    for f in w.factors:
        J = _j_values(w, f.id, r, 3)
        assert np.all(J <= I * (1 + 1e-9))


def test_free_group_is_divergent():
    rep = classify_walk(free_group())
    assert rep.verdict == VERDICT_DIVERGENT
    assert rep.d is None and rep.kappa_star == 1.5
    assert not [f for f in rep.flags if f.startswith("contradiction")]


def test_rank_five_pair_is_convergent():
    rep = classify_walk(product_pair(5, 0.9))
    assert rep.verdict == VERDICT_CONVERGENT
    assert rep.d == 5 and rep.kappa_star == 2.5
    assert rep.boundary_type == "degeneracy_contact"


def test_functionals_at_radius():
    f = compute_functionals(free_group(), R_FREE)
    assert isinstance(f.I[0], Divergent) and f.I[0].model == "inv_sqrt"
    assert isinstance(f.J[1][1], GreenValue)
    w = product_pair(5, 0.9)
    rep = classify_walk(w, cross_check=False)
    f = compute_functionals(w, rep.R)
    assert isinstance(f.I[0], GreenValue)
    assert isinstance(f.I[1], Divergent)


def test_plateau_bounded_for_divergent_walk():
    out = plateau_check(free_group(), 1)
    assert out["bounded"] and out["route"] == "direct"
    # the direct value at the radius sits on the ladder plateau
    assert out["value"] == pytest.approx(out["plateau"], rel=0.05)


def test_exponent_agrees_with_prediction():
    chk = verify_exponent(free_group(), 1024)
    assert chk.within and abs(chk.kappa - 1.5) < 5e-3
    assert chk.model_ok


def test_monitor_holds_on_shipped_examples():
    for w in (free_group(), product_pair(5, 0.9)):
        m = ij_ratio_monitor(w)
        assert m.ok, (m.subset_violations, m.bound_growing)


def test_ratio_stabilizes_deep_in_convergent_regime():
    w = product_pair(5, 0.9)
    R = classify_walk(w, cross_check=False).R
    grid = R * (1 - 10.0 ** -np.linspace(5, 6, 5))
    m = ij_ratio_monitor(w, grid)
    assert m.ratio_spread_last_decade < 0.10


def test_verdict_invariant_under_relabeling_and_laziness():
    w = free_group(0.4)
    base = classify_walk(w, cross_check=False)
    assert classify_walk(w.permuted([1, 0]), cross_check=False).verdict == base.verdict
    assert classify_walk(free_group(0.4, 0.2), cross_check=False).verdict == base.verdict
