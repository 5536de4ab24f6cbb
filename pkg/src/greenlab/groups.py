"""Free products of lattice and finite factors: specs, normal forms, oracles.

Elements of a free product are words of alternating syllables
``(factor_id, element)``. The brute-force routines here convolve sparse
distributions over interned words. They use plain dictionaries and exist only
to validate the analytic modules at small path lengths.
"""
from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetExceeded, InvalidWalk, RadiusUnknown, UnknownFactorId

DEFAULT_BUDGET = 5_000_000
_WEIGHT_TOL = 1e-12


# ---------------------------------------------------------------------------
# integer lattice helpers
# ---------------------------------------------------------------------------

def hermite_rows(vectors: Iterable[Sequence[int]], dim: int) -> list[list[int]]:
    """Row-style Hermite normal form of the lattice spanned by ``vectors``.

    Returns the nonzero basis rows (upper triangular, positive pivots).
    """
    rows = [list(map(int, v)) for v in vectors if any(v)]
    basis: list[list[int]] = []
    col = 0
    while rows and col < dim:
        rows = [r for r in rows if any(r)]
        nz = [r for r in rows if r[col] != 0]
        if not nz:
            col += 1
            continue
        # Euclid on column ``col``
        while len(nz) > 1:
            nz.sort(key=lambda r: abs(r[col]))
            piv = nz[0]
            new = [piv]
            for r in nz[1:]:
                q = r[col] // piv[col]
                rr = [a - q * b for a, b in zip(r, piv)]
                if rr[col] != 0:
                    new.append(rr)
                else:
                    rows.append(rr)
            zero_col = [r for r in rows if r[col] == 0]
            nz = new
            rows = zero_col
        piv = nz[0]
        if piv[col] < 0:
            piv = [-a for a in piv]
        basis.append(piv)
        rows = [r for r in rows if any(r)]
        col += 1
    # reduce entries above pivots
    for i in range(len(basis)):
        pc = next(k for k, a in enumerate(basis[i]) if a != 0)
        for j in range(i):
            q = basis[j][pc] // basis[i][pc]
            if q:
                basis[j] = [a - q * b for a, b in zip(basis[j], basis[i])]
    return basis


def lattice_index(vectors: Iterable[Sequence[int]], dim: int) -> int:
    """Index of the lattice spanned by ``vectors`` in Z^dim (0 if not full rank)."""
    basis = hermite_rows(vectors, dim)
    if len(basis) < dim:
        return 0
    idx = 1
    for row in basis:
        idx *= next(a for a in row if a != 0)
    return abs(idx)


def lattice_contains(basis: list[list[int]], v: Sequence[int]) -> bool:
    """Membership test for a Hermite basis from :func:`hermite_rows`."""
    v = list(map(int, v))
    for row in basis:
        pc = next(k for k, a in enumerate(row) if a != 0)
        if v[pc] % row[pc]:
            return False
        q = v[pc] // row[pc]
        v = [a - q * b for a, b in zip(v, row)]
    return not any(v)


# ---------------------------------------------------------------------------
# factor and walk specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorSpec:
    """One free factor with its step measure.

    ``kind`` is ``"lattice"`` (elements are integer tuples of length ``rank``)
    or ``"finite"`` (elements are indices into ``table``, identity at 0).
    """

    id: int
    kind: str
    step: tuple
    rank: int = 0
    table: tuple | None = None
    _inv: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("lattice", "finite"):
            raise InvalidWalk(f"factor {self.id}: unknown kind {self.kind!r}")
        step = tuple((self._canon(x), float(wt)) for x, wt in self.step)
        merged: dict = {}
        for x, wt in step:
            if not (wt > 0 and math.isfinite(wt)):
                raise InvalidWalk(f"factor {self.id}: step weights must be positive")
            merged[x] = merged.get(x, 0.0) + wt
        step = tuple(sorted(merged.items()))
        object.__setattr__(self, "step", step)
        total = sum(wt for _, wt in step)
        if abs(total - 1.0) > 1e-9:
            raise InvalidWalk(f"factor {self.id}: step weights sum to {total}, not 1")
        if self.kind == "finite":
            self._validate_table()
        else:
            if self.rank < 1:
                raise InvalidWalk(f"factor {self.id}: lattice rank must be >= 1")
            for x, _ in step:
                if len(x) != self.rank:
                    raise InvalidWalk(f"factor {self.id}: element {x} has wrong length")
        law = dict(step)
        for x, wt in step:
            if abs(law.get(self.inv(x), 0.0) - wt) > _WEIGHT_TOL:
                raise InvalidWalk(f"factor {self.id}: step measure is not symmetric at {x}")
        if not self._generates():
            raise InvalidWalk(f"factor {self.id}: step support does not generate the factor")

    def _canon(self, x):
        if self.kind == "lattice":
            return tuple(int(a) for a in x)
        return int(x)

    def _validate_table(self):
        if self.table is None:
            raise InvalidWalk(f"factor {self.id}: finite factor needs a multiplication table")
        t = np.asarray(self.table, dtype=int)
        m = t.shape[0]
        if t.shape != (m, m) or m < 2:
            raise InvalidWalk(f"factor {self.id}: table must be square with at least 2 elements")
        if t.min() < 0 or t.max() >= m:
            raise InvalidWalk(f"factor {self.id}: table entries out of range")
        if not (np.array_equal(t[0], np.arange(m)) and np.array_equal(t[:, 0], np.arange(m))):
            raise InvalidWalk(f"factor {self.id}: index 0 must be the identity")
        # associativity (m <= a few dozen in practice)
        lhs = t[t[:, :, None], np.arange(m)[None, None, :]]  # (a*b)*c
        rhs = t[np.arange(m)[:, None, None], t[None, :, :]]  # a*(b*c)
        if not np.array_equal(lhs, rhs):
            raise InvalidWalk(f"factor {self.id}: table is not associative")
        inv = []
        for a in range(m):
            hits = np.nonzero(t[a] == 0)[0]
            if hits.size != 1 or t[hits[0], a] != 0:
                raise InvalidWalk(f"factor {self.id}: element {a} has no two-sided inverse")
            inv.append(int(hits[0]))
        object.__setattr__(self, "table", tuple(tuple(int(v) for v in row) for row in t))
        object.__setattr__(self, "_inv", tuple(inv))
        for x, _ in self.step:
            if not 0 <= x < m:
                raise InvalidWalk(f"factor {self.id}: step element {x} not in the table")

    def _generates(self) -> bool:
        if self.kind == "finite":
            m = len(self.table)
            reach = {0}
            frontier = [0]
            gens = [x for x, _ in self.step]
            while frontier:
                nxt = []
                for a in frontier:
                    for g in gens:
                        b = self.table[a][g]
                        if b not in reach:
                            reach.add(b)
                            nxt.append(b)
                frontier = nxt
            return len(reach) == m
        # full-rank lattice spanned by the support (see the notes on sublattices)
        return lattice_index([x for x, _ in self.step], self.rank) > 0

    # -- group operations
    @property
    def identity(self):
        return (0,) * self.rank if self.kind == "lattice" else 0

    @property
    def order(self) -> float:
        return float(len(self.table)) if self.kind == "finite" else math.inf

    def mul(self, a, b):
        if self.kind == "lattice":
            return tuple(x + y for x, y in zip(a, b))
        return self.table[a][b]

    def inv(self, a):
        if self.kind == "lattice":
            return tuple(-x for x in a)
        if self._inv is None:
            t = self.table
            return next(b for b in range(len(t)) if t[a][b] == 0)
        return self._inv[a]

    def contains(self, a) -> bool:
        if self.kind == "lattice":
            return isinstance(a, tuple) and len(a) == self.rank and all(isinstance(v, (int, np.integer)) for v in a)
        return isinstance(a, (int, np.integer)) and 0 <= a < len(self.table)

    def is_identity(self, a) -> bool:
        return a == self.identity

    def support_lattice_index(self) -> int:
        """Index in Z^d of the lattice spanned by support differences."""
        if self.kind != "lattice":
            raise TypeError("only lattice factors have a support lattice")
        pts = [x for x, _ in self.step]
        diffs = [tuple(a - b for a, b in zip(x, pts[0])) for x in pts[1:]]
        return lattice_index(diffs, self.rank)

    def key(self) -> tuple:
        """Hashable description of the measure (independent of the id)."""
        return (self.kind, self.rank, self.table, self.step)


@dataclass(frozen=True)
class WalkSpec:
    """Free product of factors with mixing weights and identity laziness."""

    factors: tuple
    weights: tuple
    laziness: float = 0.0

    def __post_init__(self):
        factors = tuple(self.factors)
        weights = tuple(float(a) for a in self.weights)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "weights", weights)
        if len(factors) < 2:
            raise InvalidWalk("a free product needs at least two factors")
        if len(weights) != len(factors):
            raise InvalidWalk("one weight per factor is required")
        if any(not (a > 0) for a in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise InvalidWalk("weights must be positive and sum to 1")
        if not (0.0 <= self.laziness < 1.0):
            raise InvalidWalk("laziness must lie in [0, 1)")
        ids = [f.id for f in factors]
        if len(set(ids)) != len(ids):
            raise InvalidWalk("factor ids must be distinct")
        if len(factors) == 2 and all(f.order == 2 for f in factors):
            raise InvalidWalk("Z/2 * Z/2 is elementary (infinite dihedral)")

    @property
    def m(self) -> int:
        return len(self.factors)

    def factor(self, fid: int) -> FactorSpec:
        for f in self.factors:
            if f.id == fid:
                return f
        raise UnknownFactorId(f"no factor with id {fid}")

    def index_of(self, fid: int) -> int:
        for i, f in enumerate(self.factors):
            if f.id == fid:
                return i
        raise UnknownFactorId(f"no factor with id {fid}")

    def effective_weights(self) -> np.ndarray:
        """``(1 - beta) * alpha_p``: total step probability into factor p."""
        return (1.0 - self.laziness) * np.asarray(self.weights)

    def steps(self) -> list[tuple]:
        """Free-product steps as ``(factor_id or None, element, probability)``."""
        out = []
        if self.laziness > 0:
            out.append((None, None, self.laziness))
        for f, a in zip(self.factors, self.effective_weights()):
            for x, wt in f.step:
                out.append((f.id, x, a * wt))
        return out

    def with_weights(self, weights: Sequence[float]) -> "WalkSpec":
        return WalkSpec(self.factors, tuple(weights), self.laziness)

    def with_laziness(self, beta: float) -> "WalkSpec":
        return WalkSpec(self.factors, self.weights, beta)

    def permuted(self, order: Sequence[int]) -> "WalkSpec":
        return WalkSpec(tuple(self.factors[i] for i in order), tuple(self.weights[i] for i in order), self.laziness)


# ---------------------------------------------------------------------------
# finite group tables
# ---------------------------------------------------------------------------

def _table_from(elements: list, mul) -> tuple:
    index = {e: i for i, e in enumerate(elements)}
    return tuple(tuple(index[mul(a, b)] for b in elements) for a in elements)


def cyclic_table(m: int) -> tuple:
    return _table_from(list(range(m)), lambda a, b: (a + b) % m)


def dihedral_table(k: int) -> tuple:
    """Dihedral group of order ``2k``: pairs (rotation, flip), identity first."""
    elems = [(r, s) for s in (0, 1) for r in range(k)]

    def mul(a, b):
        r1, s1 = a
        r2, s2 = b
        return ((r1 + (r2 if s1 == 0 else -r2)) % k, s1 ^ s2)

    return _table_from(elems, mul)


def klein4_table() -> tuple:
    return _table_from([(0, 0), (1, 0), (0, 1), (1, 1)], lambda a, b: ((a[0] + b[0]) % 2, (a[1] + b[1]) % 2))


def lattice_factor(fid: int, rank: int, steps: Iterable[tuple]) -> FactorSpec:
    return FactorSpec(fid, "lattice", tuple((tuple(x), w) for x, w in steps), rank=rank)


def finite_factor(fid: int, table: tuple, steps: Iterable[tuple]) -> FactorSpec:
    return FactorSpec(fid, "finite", tuple(steps), table=table)


def srw_lattice(fid: int, rank: int) -> FactorSpec:
    """Simple random walk: uniform on the ``2 * rank`` unit vectors."""
    steps = []
    for i in range(rank):
        for s in (1, -1):
            e = [0] * rank
            e[i] = s
            steps.append((tuple(e), 1.0 / (2 * rank)))
    return lattice_factor(fid, rank, steps)


def product_lattice(fid: int, rank: int, law: dict) -> FactorSpec:
    """Coordinates move independently, each by the symmetric 1-d ``law``."""
    items = sorted(law.items())
    steps = []
    for combo in itertools.product(items, repeat=rank):
        x = tuple(int(c[0]) for c in combo)
        w = math.prod(c[1] for c in combo)
        if w > 0:
            steps.append((x, w))
    return lattice_factor(fid, rank, steps)


def lazy_product_lattice(fid: int, rank: int, q: float) -> FactorSpec:
    """Product walk with per-coordinate law ``{-1: q, 0: 1 - 2q, +1: q}``."""
    law = {-1: q, 1: q}
    if 1 - 2 * q > 0:
        law[0] = 1 - 2 * q
    return product_lattice(fid, rank, law)


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------

Word = tuple  # tuple of (factor_id, element) syllables; () is the identity


def _factor_map(w: WalkSpec | Sequence[FactorSpec]) -> dict:
    factors = w.factors if isinstance(w, WalkSpec) else w
    return {f.id: f for f in factors}


def normalize_word(raw: Iterable[tuple], factors: WalkSpec | Sequence[FactorSpec]) -> Word:
    """Reduce a syllable sequence to the alternating normal form."""
    fmap = _factor_map(factors)
    stack: list = []
    for fid, x in raw:
        if fid not in fmap:
            raise UnknownFactorId(f"no factor with id {fid}")
        f = fmap[fid]
        x = f._canon(x)
        if not f.contains(x):
            raise ValueError(f"element {x!r} does not belong to factor {fid}")
        if f.is_identity(x):
            continue
        if stack and stack[-1][0] == fid:
            y = f.mul(stack[-1][1], x)
            stack.pop()
            if not f.is_identity(y):
                stack.append((fid, y))
        else:
            stack.append((fid, x))
    return tuple(stack)


def word_inverse(word: Word, factors) -> Word:
    fmap = _factor_map(factors)
    return tuple((fid, fmap[fid].inv(x)) for fid, x in reversed(word))


def word_mul(a: Word, b: Word, factors) -> Word:
    return normalize_word(a + b, factors)


class WordTable:
    """Append-only intern table mapping normal forms to integer handles."""

    def __init__(self, w: WalkSpec):
        self.walk = w
        self._fmap = _factor_map(w)
        self._index: dict = {(): 0}
        self._words: list = [()]
        self._lock = threading.Lock()
        self._steps = w.steps()
        self._child: dict = {}

    def __len__(self) -> int:
        return len(self._words)

    def intern(self, word: Word) -> int:
        h = self._index.get(word)
        if h is None:
            with self._lock:
                h = self._index.get(word)
                if h is None:
                    h = len(self._words)
                    self._words.append(word)
                    self._index[word] = h
        return h

    def word(self, h: int) -> Word:
        return self._words[h]

    def step_word(self, word: Word, k: int) -> Word:
        fid, x, _ = self._steps[k]
        if fid is None:
            return word
        f = self._fmap[fid]
        if f.is_identity(x):
            return word
        if word and word[-1][0] == fid:
            y = f.mul(word[-1][1], x)
            if f.is_identity(y):
                return word[:-1]
            return word[:-1] + ((fid, y),)
        return word + ((fid, x),)

    def child(self, h: int, k: int) -> int:
        key = (h, k)
        c = self._child.get(key)
        if c is None:
            c = self.intern(self.step_word(self._words[h], k))
            self._child[key] = c
        return c

    def inverse(self, h: int) -> int:
        return self.intern(word_inverse(self._words[h], self.walk))

    @property
    def steps(self) -> list:
        return self._steps


def _advance(table: WordTable, dist: dict, keep=None) -> dict:
    out: dict = {}
    steps = table.steps
    for h, p in dist.items():
        for k, (_, _, wt) in enumerate(steps):
            c = table.child(h, k)
            if keep is not None and not keep(c):
                continue
            out[c] = out.get(c, 0.0) + p * wt
    return out


def brute_force_distributions(w: WalkSpec, n: int, budget: int = DEFAULT_BUDGET, table: WordTable | None = None):
    """Full distributions ``p^(k)(e, .)`` for ``k <= n`` over interned words."""
    table = table or WordTable(w)
    dists = [{0: 1.0}]
    used = 1
    for k in range(1, n + 1):
        nxt = _advance(table, dists[-1])
        used += len(nxt)
        if used > budget:
            raise BudgetExceeded(f"support budget {budget} exceeded at step {k}", budget, dists)
        mass = math.fsum(nxt.values())
        if abs(mass - 1.0) > 1e-12:
            raise AssertionError(f"mass {mass!r} not conserved at step {k}")
        dists.append(nxt)
    return dists, table


def brute_force_return_sequence(w: WalkSpec, N: int, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """``p^(n)(e, e)`` for ``n <= N`` by sparse convolution.

    Only the distributions up to ``ceil(N/2)`` steps are formed; longer return
    probabilities come from ``p^(a+b)(e,e) = sum_x p^(a)(e,x) p^(b)(x,e)``
    with ``p^(b)(x, e) = p^(b)(e, x^{-1})``.
    """
    half = (N + 1) // 2
    try:
        dists, table = brute_force_distributions(w, half, budget)
    except BudgetExceeded as exc:
        got = exc.partial
        partial = _returns_from(got, None, 2 * (len(got) - 1))
        raise BudgetExceeded(str(exc), exc.cap, partial) from None
    return _returns_from(dists, table, N)


def _returns_from(dists, table, N):
    out = np.zeros(N + 1)
    if table is None:
        # partial result: only direct values are available
        for k, d in enumerate(dists[: N + 1]):
            out[k] = d.get(0, 0.0)
        return out[: len(dists)]
    inv_cache: dict = {}
    for n in range(N + 1):
        a = n // 2
        b = n - a
        da, db = dists[a], dists[b]
        acc = []
        for h, p in da.items():
            hi = inv_cache.get(h)
            if hi is None:
                hi = table.inverse(h)
                inv_cache[h] = hi
            q = db.get(hi)
            if q:
                acc.append(p * q)
        out[n] = math.fsum(acc)
    return out


def symmetry_defect(w: WalkSpec, dist: dict, table: WordTable) -> float:
    """Largest ``|p(x) - p(x^{-1})|`` over the support of ``dist``."""
    worst = 0.0
    for h, p in dist.items():
        worst = max(worst, abs(p - dist.get(table.inverse(h), 0.0)))
    return worst


# ---------------------------------------------------------------------------
# first return and Green values by brute force
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BruteFirstReturn:
    factor_id: int
    r: float
    L: int
    kernel: dict
    per_step: np.ndarray
    tail: float

    def weight(self, x) -> float:
        return self.kernel.get(x, 0.0)

    @property
    def mass(self) -> float:
        return math.fsum(self.kernel.values())


def _geometric_tail(per_step: np.ndarray, q: float) -> float:
    """Tail estimate ``c * q / (1 - q)`` from the last nonzero step mass.

    Uses the larger of the last two step masses so period-2 sequences are
    covered.
    """
    if q >= 1.0:
        return math.inf
    if per_step.size == 0:
        return 0.0
    last = float(np.max(per_step[-2:]))
    return last * q / (1.0 - q)


def brute_force_first_return(
    w: WalkSpec,
    factor_id: int,
    r: float,
    L: int,
    R: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> BruteFirstReturn:
    """First-return kernel to a factor subgroup from paths of length ``<= L``.

    ``kernel[h]`` sums ``r^n`` times the probability of length-``n`` paths from
    ``e`` to ``h`` in the factor whose interior stays outside the factor.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r > 0 and R is None:
        raise RadiusUnknown("a radius estimate is required for the tail bound")
    f = w.factor(factor_id)
    table = WordTable(w)
    steps = table.steps
    kernel: dict = {}
    per_step = np.zeros(L + 1)
    if r == 0:
        return BruteFirstReturn(factor_id, r, L, {}, per_step, 0.0)

    def landing(word):
        if not word:
            return f.identity
        if len(word) == 1 and word[0][0] == factor_id:
            return word[0][1]
        return None

    states: dict = {0: 1.0}
    used = 0
    for n in range(1, L + 1):
        nxt: dict = {}
        for h, p in states.items():
            for k, (_, _, wt) in enumerate(steps):
                c = table.child(h, k)
                word = table.word(c)
                x = landing(word)
                val = p * wt * r
                if x is not None:
                    kernel[x] = kernel.get(x, 0.0) + val
                    per_step[n] += val
                elif len(word) - 1 <= L - n:
                    nxt[c] = nxt.get(c, 0.0) + val
        states = nxt
        used += len(states)
        if used > budget:
            raise BudgetExceeded(f"support budget {budget} exceeded at step {n}", budget, dict(kernel))
    tail = _geometric_tail(per_step[1:], r / R) if R else 0.0
    return BruteFirstReturn(factor_id, r, L, kernel, per_step, tail)


def brute_force_green_values(
    w: WalkSpec,
    targets: Sequence[Word],
    r: float,
    L: int,
    R: float | None = None,
    budget: int = DEFAULT_BUDGET,
) -> dict:
    """Truncated ``G(e, x | r)`` for normal-form targets with a tail estimate.

    Returns ``{target: (value, tail)}``.
    """
    if r > 0 and R is None:
        raise RadiusUnknown("a radius estimate is required for the tail bound")
    table = WordTable(w)
    handles = {t: table.intern(normalize_word(t, w)) for t in targets}
    maxlen = max((len(table.word(h)) for h in handles.values()), default=0)
    sums = {t: [] for t in targets}
    steps_mass = {t: np.zeros(L + 1) for t in targets}
    dist: dict = {0: 1.0}
    for t, h in handles.items():
        if h == 0:
            sums[t].append(1.0)
            steps_mass[t][0] = 1.0
    used = 0
    rn = 1.0
    for n in range(1, L + 1):
        rn *= r
        remaining = L - n

        def keep(c, remaining=remaining):
            return len(table.word(c)) <= maxlen + remaining

        dist = _advance(table, dist, keep)
        used += len(dist)
        if used > budget:
            raise BudgetExceeded(f"support budget {budget} exceeded at step {n}", budget, None)
        for t, h in handles.items():
            v = dist.get(h, 0.0) * rn
            if v:
                sums[t].append(v)
                steps_mass[t][n] = v
    q = r / R if R else 0.0
    out = {}
    for t in targets:
        tail = _geometric_tail(steps_mass[t][1:], q) if r > 0 else 0.0
        out[t] = (math.fsum(sums[t]), tail)
    return out
