"""Shipped walk families, randomized generators and the JSON walk format.

The JSON walk literal is

    {"laziness": 0.1, "weights": [0.9, 0.1],
     "factors": [{"kind": "lattice", "rank": 5, "steps": [[[1,0,0,0,0], 0.1], ...]},
                 {"preset": "product_pm1", "rank": 5},
                 {"kind": "finite", "table": [[...]], "steps": [[1, 0.5], [2, 0.5]]},
                 {"preset": "cyclic", "order": 3}]}

Presets expand to explicit step lists; ids default to 1, 2, ... in order.
"""
from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .errors import InvalidWalk
from .groups import (
    FactorSpec,
    WalkSpec,
    cyclic_table,
    dihedral_table,
    finite_factor,
    klein4_table,
    lattice_factor,
    lazy_product_lattice,
    product_lattice,
    srw_lattice,
)

PM1 = {1: 0.5, -1: 0.5}

# ---------------------------------------------------------------------------
# shipped families
# ---------------------------------------------------------------------------


def free_group(alpha: float = 0.5, laziness: float = 0.0) -> WalkSpec:
    """Z * Z with simple random walk on both factors."""
    return WalkSpec((srw_lattice(1, 1), srw_lattice(2, 1)), (alpha, 1 - alpha), laziness)


def product_pair(rank: int = 5, alpha: float = 0.9, laziness: float = 0.0, q: float | None = None) -> WalkSpec:
    """Z^rank * Z^rank, both factors stepping by independent coordinates.

    With ``q`` unset each coordinate moves by +-1 with probability 1/2,
    otherwise by +-1 with probability ``q`` and stays with ``1 - 2q``.
    """
    if q is None:
        f1, f2 = product_lattice(1, rank, PM1), product_lattice(2, rank, PM1)
    else:
        f1, f2 = lazy_product_lattice(1, rank, q), lazy_product_lattice(2, rank, q)
    return WalkSpec((f1, f2), (alpha, 1 - alpha), laziness)


def sticky_lattice_line(alpha: float = 0.9, q: float = 0.02, laziness: float = 0.0) -> WalkSpec:
    """Z^5 with a very lazy product walk, freely joined to Z with SRW."""
    return WalkSpec((lazy_product_lattice(1, 5, q), srw_lattice(2, 1)), (alpha, 1 - alpha), laziness)


FAMILIES = {
    "free_group": free_group,
    "product_pair": product_pair,
    "sticky_lattice_line": sticky_lattice_line,
}


def shipped_scenarios() -> dict[str, WalkSpec]:
    """Named walks used by the monitors and the examples."""
    return {
        "free_group": free_group(),
        "free_group_skew": free_group(0.8),
        "z5_pair_0.9": product_pair(5, 0.9),
        "z5_pair_0.5": product_pair(5, 0.5),
        "z5_pair_lazy_0.9": product_pair(5, 0.9, laziness=0.3),
        "z6_pair_0.9": product_pair(6, 0.9),
        "z5_sticky_line_0.9": sticky_lattice_line(0.9),
    }


# ---------------------------------------------------------------------------
# randomized generators
# ---------------------------------------------------------------------------


def _symmetric_lattice(rng: np.random.Generator, fid: int, rank: int, max_support: int | None,
                       diagonals: bool = True) -> FactorSpec:
    units = []
    for i in range(rank):
        e = [0] * rank
        e[i] = 1
        units.append(tuple(e))
    pairs = list(units)
    extra = []
    if rank == 1 or not diagonals:
        for i in range(rank):
            e = [0] * rank
            e[i] = 2
            extra.append(tuple(e))
    else:
        for i, j in itertools.combinations(range(rank), 2):
            e = [0] * rank
            e[i], e[j] = 1, rng.choice([-1, 1])
            extra.append(tuple(e))
    budget = max_support if max_support is not None else 2 * (rank + len(extra)) + 1
    slots = budget - 2 * rank
    if slots < 0:
        raise InvalidWalk("support budget too small to generate the lattice")
    lazy = slots % 2 == 1 and rng.random() < 0.5
    n_extra = min(len(extra), (slots - int(lazy)) // 2)
    n_extra = int(rng.integers(0, n_extra + 1))
    pairs += [extra[k] for k in rng.permutation(len(extra))[:n_extra]]
    w = rng.uniform(0.3, 1.0, size=len(pairs))
    w0 = rng.uniform(0.1, 0.5) if lazy else 0.0
    total = 2 * w.sum() + w0
    steps = []
    for x, wx in zip(pairs, w):
        steps.append((x, wx / total))
        steps.append((tuple(-c for c in x), wx / total))
    if lazy:
        steps.append(((0,) * rank, w0 / total))
    return lattice_factor(fid, rank, steps)


def _symmetric_finite(rng: np.random.Generator, fid: int) -> FactorSpec:
    choice = int(rng.integers(0, 4))
    if choice == 0:
        m = int(rng.integers(2, 7))
        table = cyclic_table(m)
        gens = [1, m - 1] if m > 2 else [1]
    elif choice == 1:
        table = dihedral_table(3)
        # rotation pair plus one reflection; reflections are involutions
        gens = [1, 2, 3]
    elif choice == 2:
        table = klein4_table()
        gens = [1, 2, 3] if rng.random() < 0.5 else [1, 2]
    else:
        table = cyclic_table(2)
        gens = [1]
    probe = FactorSpec(fid, "finite", tuple((g, 1.0 / len(gens)) for g in gens), table=table)
    classes: dict = {}
    for g in gens:
        key = tuple(sorted({g, probe.inv(g)}))
        classes.setdefault(key, rng.uniform(0.3, 1.0))
    if rng.random() < 0.3 and len(gens) < 5:
        classes[(0,)] = rng.uniform(0.1, 0.5)
    total = sum(wt * len(k) for k, wt in classes.items())
    steps = [(g, wt / total) for k, wt in classes.items() for g in k]
    return finite_factor(fid, table, steps)


def random_oracle_walk(rng: np.random.Generator, max_support: int = 5) -> WalkSpec:
    """2-3 factors, lattice ranks <= 2 or finite factors of order <= 6."""
    while True:
        m = int(rng.integers(2, 4))
        factors = []
        for fid in range(1, m + 1):
            if rng.random() < 0.5:
                factors.append(_symmetric_lattice(rng, fid, int(rng.integers(1, 3)), max_support))
            else:
                factors.append(_symmetric_finite(rng, fid))
        alpha = rng.dirichlet(np.full(m, 2.0))
        alpha = np.maximum(alpha, 0.05)
        alpha = alpha / alpha.sum()
        beta = float(rng.choice([0.0, 0.0, rng.uniform(0.05, 0.3)]))
        try:
            return WalkSpec(tuple(factors), tuple(alpha), beta)
        except InvalidWalk:
            continue


def _random_product(rng: np.random.Generator, fid: int, rank: int) -> FactorSpec:
    p1 = rng.uniform(0.1, 0.5)
    law = {1: p1, -1: p1}
    if rng.random() < 0.5 and 2 * p1 < 0.9:
        p2 = rng.uniform(0.0, 0.5 - p1)
        law[2] = law[-2] = p2
    rest = 1.0 - sum(law.values())
    if rest > 1e-12:
        law[0] = rest
    return product_lattice(fid, rank, law)


def random_admissible_walk(rng: np.random.Generator, max_rank: int = 4) -> WalkSpec:
    """Symmetric free product of 2-3 lattices with ranks in 1..max_rank.

    Ranks up to 2 may carry diagonal steps; higher ranks are drawn either
    axis-supported or of product form, the two shapes the exact return
    sequences handle without a full torus grid.
    """
    m = int(rng.integers(2, 4))
    factors = []
    for fid in range(1, m + 1):
        rank = int(rng.integers(1, max_rank + 1))
        if rank <= 2:
            factors.append(_symmetric_lattice(rng, fid, rank, None))
        elif rng.random() < 0.5:
            factors.append(_symmetric_lattice(rng, fid, rank, None, diagonals=False))
        else:
            factors.append(_random_product(rng, fid, rank))
    factors = tuple(factors)
    alpha = rng.dirichlet(np.full(m, 1.0))
    alpha = np.maximum(alpha, 0.02)
    alpha = alpha / alpha.sum()
    beta = float(rng.choice([0.0, rng.uniform(0.0, 0.4)]))
    return WalkSpec(factors, tuple(alpha), beta)


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------


def _factor_from_json(obj: dict, fid: int) -> FactorSpec:
    fid = int(obj.get("id", fid))
    preset = obj.get("preset")
    if preset is not None:
        rank = int(obj.get("rank", 1))
        if preset == "srw":
            return srw_lattice(fid, rank)
        if preset == "product_pm1":
            return product_lattice(fid, rank, PM1)
        if preset == "lazy_product":
            return lazy_product_lattice(fid, rank, float(obj["q"]))
        if preset in ("cyclic", "dihedral", "klein4"):
            if preset == "cyclic":
                table = cyclic_table(int(obj["order"]))
            elif preset == "dihedral":
                table = dihedral_table(int(obj["order"]) // 2)
            else:
                table = klein4_table()
            n = len(table)
            if "steps" in obj:
                steps = [(int(x), float(wt)) for x, wt in obj["steps"]]
            else:
                steps = [(g, 1.0 / (n - 1)) for g in range(1, n)]
            return finite_factor(fid, table, steps)
        raise InvalidWalk(f"unknown factor preset {preset!r}")
    kind = obj["kind"]
    if kind == "lattice":
        steps = [(tuple(int(c) for c in x), float(wt)) for x, wt in obj["steps"]]
        rank = int(obj.get("rank", len(steps[0][0]) if steps else 0))
        return lattice_factor(fid, rank, steps)
    table = tuple(tuple(int(c) for c in row) for row in obj["table"])
    return finite_factor(fid, table, [(int(x), float(wt)) for x, wt in obj["steps"]])


def walk_from_json(obj: dict) -> WalkSpec:
    factors = tuple(_factor_from_json(f, i + 1) for i, f in enumerate(obj["factors"]))
    weights = [float(a) for a in obj["weights"]]
    total = sum(weights)
    if not total > 0:
        raise InvalidWalk("weights must have a positive sum")
    return WalkSpec(factors, tuple(a / total for a in weights), float(obj.get("laziness", 0.0)))


def walk_to_json(w: WalkSpec) -> dict:
    factors = []
    for f in w.factors:
        if f.kind == "lattice":
            factors.append({"id": f.id, "kind": "lattice", "rank": f.rank,
                            "steps": [[list(x), wt] for x, wt in f.step]})
        else:
            factors.append({"id": f.id, "kind": "finite", "table": [list(r) for r in f.table],
                            "steps": [[x, wt] for x, wt in f.step]})
    return {"laziness": w.laziness, "weights": list(w.weights), "factors": factors}


def set_parameter(obj: dict, path: Sequence, value: float) -> dict:
    """Copy of a walk literal with the field at ``path`` replaced by ``value``."""
    import copy

    out = copy.deepcopy(obj)
    node = out
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    return out
