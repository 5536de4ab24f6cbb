from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenlab.errors import InvalidWalk
from greenlab.scenarios import (
    random_admissible_walk,
    random_oracle_walk,
    set_parameter,
    shipped_scenarios,
    walk_from_json,
    walk_to_json,
)


def _symmetric(f):
    law = {}
    for x, wt in f.step:
        law[x] = law.get(x, 0.0) + wt
    return all(abs(law.get(f.inv(x), 0.0) - wt) < 1e-14 for x, wt in law.items())


def test_shipped_round_trip():
    for w in shipped_scenarios().values():
        back = walk_from_json(walk_to_json(w))
        assert walk_to_json(back) == walk_to_json(w)


@pytest.mark.parametrize(
    "factor",
    [
        {"preset": "srw", "rank": 3},
        {"preset": "product_pm1", "rank": 5},
        {"preset": "lazy_product", "rank": 2, "q": 0.1},
        {"preset": "cyclic", "order": 4},
        {"preset": "dihedral", "order": 6},
        {"preset": "klein4"},
    ],
)
def test_presets_are_probability_measures(factor):
    w = walk_from_json({"weights": [1, 1], "factors": [factor, {"preset": "srw"}]})
    f = w.factors[0]
    assert sum(wt for _, wt in f.step) == pytest.approx(1.0, abs=1e-14)
    assert _symmetric(f)


def test_weights_renormalized_and_errors():
    w = walk_from_json({"weights": [3, 1], "factors": [{"preset": "srw"}, {"preset": "srw"}]})
    assert w.weights == pytest.approx((0.75, 0.25))
    with pytest.raises(InvalidWalk):
        walk_from_json({"weights": [1, 1], "factors": [{"preset": "nope"}, {"preset": "srw"}]})


def test_set_parameter_copies():
    obj = {"weights": [0.5, 0.5], "laziness": 0.0}
    out = set_parameter(obj, ["weights", 0], 0.7)
    assert out["weights"][0] == 0.7 and obj["weights"][0] == 0.5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_walks_are_symmetric_probabilities(seed):
    rng = np.random.default_rng(seed)
    for w in (random_oracle_walk(rng), random_admissible_walk(rng)):
        assert sum(w.weights) == pytest.approx(1.0, abs=1e-12)
        assert all(_symmetric(f) for f in w.factors)
        assert 2 <= len(w.factors) <= 3
