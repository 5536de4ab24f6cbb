from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab.errors import BudgetExceeded, InvalidWalk, RadiusUnknown, UnknownFactorId
from greenlab.groups import (
    FactorSpec,
    WalkSpec,
    WordTable,
    brute_force_distributions,
    brute_force_first_return,
    brute_force_return_sequence,
    cyclic_table,
    dihedral_table,
    finite_factor,
    klein4_table,
    normalize_word,
    srw_lattice,
    symmetry_defect,
    word_inverse,
    word_mul,
)
from greenlab.scenarios import free_group, random_oracle_walk


def _walk():
    return WalkSpec((srw_lattice(1, 2), finite_factor(2, dihedral_table(3), [(1, 0.3), (2, 0.3), (3, 0.4)])), (0.6, 0.4))


def test_finite_tables_are_groups():
    for table in (cyclic_table(5), dihedral_table(4), klein4_table()):
        n = len(table)
        assert all(table[0][a] == a == table[a][0] for a in range(n))
        assert all(any(table[a][b] == 0 for b in range(n)) for a in range(n))
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    assert table[table[a][b]][c] == table[a][table[b][c]]


def test_invalid_walks_rejected():
    with pytest.raises(InvalidWalk):
        WalkSpec((srw_lattice(1, 1),), (1.0,))
    with pytest.raises(InvalidWalk):
        WalkSpec((srw_lattice(1, 1), srw_lattice(2, 1)), (0.7, 0.7))
    with pytest.raises(InvalidWalk):
        FactorSpec(1, "lattice", (((1,), 0.7), ((-1,), 0.3)), rank=1)  # not symmetric
    z2 = finite_factor(1, cyclic_table(2), [(1, 1.0)])
    with pytest.raises(InvalidWalk):
        WalkSpec((z2, finite_factor(2, cyclic_table(2), [(1, 1.0)])), (0.5, 0.5))
    with pytest.raises(UnknownFactorId):
        free_group().factor(7)


def test_normal_form_cancels_and_merges():
    w = _walk()
    word = normalize_word([(1, (1, 0)), (2, 1), (2, 2), (1, (-1, 0))], w)
    assert word == ()  # rotation 1 * rotation 2 = e in Z/3
    word = normalize_word([(1, (1, 0)), (1, (0, 1)), (2, 3)], w)
    assert word == ((1, (1, 1)), (2, 3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([1, 2]), st.integers(0, 5)), max_size=8))
def test_word_inverse_property(raw):
    w = _walk()
    syl = [(1, (x, -x)) if fid == 1 else (2, x % 6) for fid, x in raw]
    word = normalize_word(syl, w)
    assert word_mul(word, word_inverse(word, w), w) == ()
    assert normalize_word(word, w) == word


def test_intern_table_is_canonical():
    w = _walk()
    t = WordTable(w)
    a = t.intern(normalize_word([(1, (1, 0)), (2, 1)], w))
    b = t.intern(normalize_word([(1, (1, 0)), (2, 2), (2, 2)], w))
    assert a == b and t.word(a) == ((1, (1, 0)), (2, 1))


def test_free_group_returns_match_counting():
    # Z * Z with alpha = 1/2 is SRW on the 4-regular tree: p_2 = 1/4, p_4 = 7/64
    p = brute_force_return_sequence(free_group(), 8)
    assert p[2] == pytest.approx(0.25, abs=1e-15)
    assert p[4] == pytest.approx(7 / 64, abs=1e-15)
    assert np.all(p[1::2] == 0.0)


def test_mass_symmetry_and_parity():
    w = _walk()
    dists, table = brute_force_distributions(w, 6)
    for d in dists:
        assert math.fsum(d.values()) == pytest.approx(1.0, abs=1e-12)
        assert symmetry_defect(w, d, table) < 1e-15
    fg = free_group(0.3)
    p = brute_force_return_sequence(fg, 9)
    assert np.all(p[1::2] == 0.0)


def test_meet_in_middle_matches_direct():
    rng = np.random.default_rng(5)
    w = random_oracle_walk(rng)
    dists, table = brute_force_distributions(w, 8)
    direct = np.array([d.get(0, 0.0) for d in dists])
    mim = brute_force_return_sequence(w, 8)
    assert np.allclose(direct, mim, rtol=1e-12, atol=1e-300)


def test_budget_is_enforced():
    with pytest.raises(BudgetExceeded) as info:
        brute_force_return_sequence(free_group(), 40, budget=2000)
    assert info.value.cap == 2000


def test_first_return_needs_radius():
    with pytest.raises(RadiusUnknown):
        brute_force_first_return(free_group(), 1, 1.0, 6)
    fr = brute_force_first_return(free_group(), 1, 0.0, 6)
    assert fr.mass == 0.0
