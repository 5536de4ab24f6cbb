"""Factor-level Green functions for lattice and finite factors.

For a lattice factor the return sequence ``pi_n = p_n(0, x)`` is computed
exactly up to some ``N`` and continued beyond ``N`` by a fitted local-CLT
model ``pi_n = n^{-d/2} (c0 + c1/n + c2/n^2 + c3/n^3)`` on the reachable
parity class. Sums over the model tail use the Hurwitz zeta function at
``s = 1`` and Euler-Maclaurin with incomplete gamma integrals for ``s < 1``.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from . import kernels
from .errors import Divergent, TailModelUnavailable, UnsupportedMeasure
from .groups import FactorSpec, hermite_rows, lattice_contains, lattice_index
from .series import Series

DEFAULT_N = 8192
GRID_MEMORY_BUDGET = 2**25  # grid cells for the torus method (256 MB of float64)
TAIL_TERMS = 4


# ---------------------------------------------------------------------------
# incomplete gamma for arbitrary real order
# ---------------------------------------------------------------------------

def _gamma_cf(a: float, z: float) -> float:
    """Legendre continued fraction for Gamma(a, z), good for z > a + 1."""
    tiny = 1e-300
    b = z + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 300):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-z + a * math.log(z)) * h


def upper_gamma(a: float, z: float) -> float:
    """Upper incomplete gamma ``Gamma(a, z)`` for real ``a`` and ``z > 0``."""
    if z <= 0:
        raise ValueError("z must be positive")
    if z > max(a + 1.0, 2.0):
        return _gamma_cf(a, z)
    if a > 0:
        return float(special.gammaincc(a, z) * special.gamma(a))
    if a == 0:
        return float(special.exp1(z))
    if float(a).is_integer():
        k = int(-a)
        return float(z ** (-k) * special.expn(k + 1, z))
    # downward recurrence from the fractional part (stable for small z)
    k = int(math.ceil(-a))
    a0 = a + k
    val = float(special.gammaincc(a0, z) * special.gamma(a0)) if a0 > 0 else float(special.exp1(z))
    aa = a0
    for _ in range(k):
        aa -= 1.0
        val = (val - math.exp(aa * math.log(z) - z)) / aa
    return val


def _stirling1(j: int) -> list[int]:
    """Signed Stirling numbers ``s(j, l)`` so that ``n^(j) = sum_l s(j,l) n^l``."""
    row = [1]
    for k in range(j):
        new = [0] * (len(row) + 1)
        for l, c in enumerate(row):
            new[l + 1] += c
            new[l] -= k * c
        row = new
    return row


def class_power_sum(b: float, tau: float, n0: int, g: int) -> float:
    """``sum_{k>=0} (n0 + g k)^{-b} exp(-tau (n0 + g k))``.

    Requires ``b > 1`` when ``tau == 0``.
    """
    if tau == 0.0:
        if b <= 1.0:
            return math.inf
        return float(g ** (-b) * special.zeta(b, n0 / g))
    z = tau * n0
    if z > 700:
        return 0.0
    # Euler-Maclaurin with step g
    if b == 1.0:
        integral = float(special.exp1(z))
    else:
        integral = tau ** (b - 1.0) * upper_gamma(1.0 - b, z)
    x = float(n0)
    f = math.exp(-b * math.log(x) - tau * x)
    gg = -b / x - tau
    g1 = b / x**2
    g2 = -2.0 * b / x**3
    f1 = f * gg
    f3 = f * (gg**3 + 3.0 * gg * g1 + g2)
    return integral / g + 0.5 * f - (g / 12.0) * f1 + (g**3 / 720.0) * f3


# ---------------------------------------------------------------------------
# exact return sequences
# ---------------------------------------------------------------------------

def _marginals(f: FactorSpec):
    """Per-coordinate laws if the measure is a product of them, else None."""
    d = f.rank
    margs = [dict() for _ in range(d)]
    for x, wt in f.step:
        for i in range(d):
            margs[i][x[i]] = margs[i].get(x[i], 0.0) + wt
    law = dict(f.step)
    expected = 1
    for m in margs:
        expected *= len(m)
    if expected != len(law):
        return None
    for x, wt in law.items():
        prod = math.prod(margs[i][x[i]] for i in range(d))
        if abs(prod - wt) > 1e-13 * max(wt, 1e-300) + 1e-15:
            return None
    return margs


def _axis_parts(f: FactorSpec):
    """Split an axis-supported measure into (zero weight, per-axis laws)."""
    d = f.rank
    zero = 0.0
    axes = [dict() for _ in range(d)]
    for x, wt in f.step:
        nz = [i for i in range(d) if x[i] != 0]
        if not nz:
            zero += wt
        elif len(nz) == 1:
            axes[nz[0]][x[nz[0]]] = wt
        else:
            return None
    return zero, axes


def _walk1d(law: dict, N: int, target: int = 0) -> np.ndarray:
    offs = np.array(sorted(law), dtype=np.int64)
    wts = np.array([law[o] for o in sorted(law)], dtype=float)
    tot = wts.sum()
    return kernels.walk1d_returns(offs, wts / tot, N, int(target))


def _time_share(x: np.ndarray, y: np.ndarray, a: float) -> np.ndarray:
    """Return probabilities of a walk that moves like X w.p. a, else like Y.

    ``c_n = sum_k Binom(n, k; a) x_k y_{n-k}``; the binomial weights are
    advanced by the convex recurrence, which never cancels.
    """
    N = x.size - 1
    out = np.empty(N + 1)
    pmf = np.zeros(N + 1)
    pmf[0] = 1.0
    for n in range(N + 1):
        if n:
            pmf[1:n + 1] = a * pmf[0:n] + (1 - a) * pmf[1:n + 1]
            pmf[0] *= 1 - a
        out[n] = float(np.dot(pmf[: n + 1], x[: n + 1] * y[n::-1]))
    return out


def _cov(f: FactorSpec) -> np.ndarray:
    d = f.rank
    S = np.zeros((d, d))
    for x, wt in f.step:
        v = np.asarray(x, dtype=float)
        S += wt * np.outer(v, v)
    return S


def _torus(f: FactorSpec, N: int, target: Sequence[int], tol_exp: float = 40.0):
    d = f.rank
    smax = max(max(abs(c) for c in x) for x, _ in f.step)
    sig2 = float(np.max(np.linalg.eigvalsh(_cov(f))))
    exact_m = N * smax + max(abs(t) for t in target) + 1
    need = int(math.ceil(math.sqrt(2.0 * N * sig2 * tol_exp))) + 1
    m = min(exact_m, need)
    if m ** d > GRID_MEMORY_BUDGET:
        raise UnsupportedMeasure(f"torus grid {m}^{d} exceeds the memory budget")
    theta = 2 * np.pi * np.arange(m) / m
    grids = np.meshgrid(*([theta] * d), indexing="ij", sparse=True)
    phi = np.zeros((m,) * d)
    for x, wt in f.step:
        arg = sum(g * c for g, c in zip(grids, x))
        phi = phi + wt * np.cos(arg)
    carg = sum(g * c for g, c in zip(grids, target))
    weight = np.cos(carg) * np.ones((m,) * d) / m**d
    out = np.empty(N + 1)
    cur = weight.copy()
    out[0] = cur.sum()
    for n in range(1, N + 1):
        cur *= phi
        out[n] = cur.sum()
    wrap = 0.0 if m >= exact_m else math.exp(-(m**2) / (2.0 * N * sig2))
    return out, wrap


def lattice_brute_returns(f: FactorSpec, N: int, target: Sequence[int] | None = None) -> np.ndarray:
    """Direct sparse convolution of the step measure (small ``N`` only)."""
    target = tuple(target) if target is not None else f.identity
    dist = {f.identity: 1.0}
    out = np.zeros(N + 1)
    out[0] = dist.get(target, 0.0)
    for n in range(1, N + 1):
        nxt: dict = {}
        for x, p in dist.items():
            for s, wt in f.step:
                y = tuple(a + b for a, b in zip(x, s))
                nxt[y] = nxt.get(y, 0.0) + p * wt
        dist = nxt
        out[n] = dist.get(target, 0.0)
    return out


def exact_returns(f: FactorSpec, N: int, target: Sequence[int] | None = None, method: str | None = None):
    """``p_n(0, target)`` for ``n <= N`` with the method used and an error bound."""
    target = tuple(target) if target is not None else f.identity
    if method is None:
        if _marginals(f) is not None:
            method = "product"
        elif _axis_parts(f) is not None:
            method = "axis"
        else:
            method = "torus"
    if method == "product":
        margs = _marginals(f)
        if margs is None:
            raise ValueError("measure is not of product form")
        cache = {}
        seq = np.ones(N + 1)
        for law, t in zip(margs, target):
            key = (tuple(sorted(law.items())), t)
            if key not in cache:
                cache[key] = _walk1d(law, N, t)
            seq = seq * cache[key]
        return seq, method, 0.0
    if method == "axis":
        parts = _axis_parts(f)
        if parts is None:
            raise ValueError("measure is not axis-supported")
        zero, axes = parts
        seq = None
        total = 0.0
        for law, t in zip(axes, target):
            q = sum(law.values())
            if q == 0:
                if t != 0:
                    return np.zeros(N + 1), method, 0.0
                continue
            one = _walk1d(law, N, t)
            if seq is None:
                seq, total = one, q
            else:
                seq = _time_share(seq, one, total / (total + q))
                total += q
        if zero > 0:
            still = np.ones(N + 1)
            seq = _time_share(seq, still, total / (total + zero))
        return seq, method, 0.0
    if method == "torus":
        seq, wrap = _torus(f, N, target)
        return seq, method, wrap
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# period and lattice structure
# ---------------------------------------------------------------------------

def space_time_basis(f: FactorSpec) -> list[list[int]]:
    """Hermite basis of the lattice generated by ``(x, 1)``, x in the support."""
    return hermite_rows([list(x) + [1] for x, _ in f.step], f.rank + 1)


def period_and_class(f: FactorSpec, target: Sequence[int]) -> tuple[int, int | None]:
    """Period ``g`` of return times and the residue of times reaching ``target``."""
    basis = space_time_basis(f)
    d = f.rank
    g = 1
    while not lattice_contains(basis, [0] * d + [g]):
        g += 1
    for c in range(g):
        if lattice_contains(basis, list(target) + [c]):
            return g, c
    return g, None


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GreenValue:
    value: float
    err: float


@dataclass(frozen=True)
class LatticeAsymptotics:
    """Local-CLT data of a symmetric lattice walk at zero tilt.

    ``C0`` is the fitted constant in ``p_n(0) ~ C0 n^{-d/2}`` on the reachable
    parity class; ``C0_predicted`` is ``mult * (2 pi)^{-d/2} det(Sigma)^{-1/2}``
    with ``mult`` the index of the support-difference lattice.
    """

    rank: int
    cov: np.ndarray
    C0: float
    C0_predicted: float
    multiplicity: int
    period: int
    spread: float
    drift: np.ndarray
    poor_fit: bool

    @property
    def consistent(self) -> bool:
        return abs(self.C0 / self.C0_predicted - 1.0) <= 0.01


class LatticeGreen:
    """Green function ``G^{(j)}(0, x | s)`` of one lattice factor."""

    def __init__(self, f: FactorSpec, N: int | None = None, target: Sequence[int] | None = None, method: str | None = None):
        if f.kind != "lattice":
            raise TypeError("LatticeGreen needs a lattice factor")
        self.factor = f
        self.rank = f.rank
        self.target = tuple(target) if target is not None else f.identity
        self.period, self.residue = period_and_class(f, self.target)
        if N is None:
            N = DEFAULT_N
            if method is None and _marginals(f) is None and _axis_parts(f) is None:
                N = self._torus_order()
        self.N = int(N)
        seq, self.method, self.wrap_err = exact_returns(f, self.N, self.target, method)
        if self.residue is None:
            seq = np.zeros_like(seq)
        else:
            mask = (np.arange(seq.size) % self.period) != self.residue
            seq[mask] = 0.0
        self.seq = seq
        self._fit = self._fit_tail(self.N)
        self._fit_half = self._fit_tail(self.N // 2)
        self._ff_cache: dict = {}
        self._n_cache: dict = {}

    def _torus_order(self) -> int:
        d = self.rank
        sig2 = float(np.max(np.linalg.eigvalsh(_cov(self.factor))))
        smax = max(max(abs(c) for c in x) for x, _ in self.factor.step)
        for N in (2048, 1024, 512, 256):
            m = min(N * smax + 1, int(math.ceil(math.sqrt(2.0 * N * sig2 * 40.0))) + 1)
            if m ** d <= GRID_MEMORY_BUDGET:
                return N
        raise UnsupportedMeasure("no torus grid fits the memory budget even at N = 256")

    # -- tail model
    def _class_indices(self, lo: float, hi: float) -> np.ndarray:
        if self.residue is None:
            return np.zeros(0, dtype=int)
        n = np.arange(int(math.ceil(lo)), int(hi) + 1)
        return n[(n % self.period) == self.residue]

    def _fit_tail(self, N: int):
        idx = self._class_indices(max(N / 4, 1), N)
        if idx.size < TAIL_TERMS + 2:
            return None
        d2 = self.rank / 2.0
        y = self.seq[idx] * idx.astype(float) ** d2
        A = np.column_stack([idx.astype(float) ** (-i) for i in range(TAIL_TERMS)])
        scale = max(float(np.max(np.abs(y))), 1e-300)
        coef, *_ = np.linalg.lstsq(A, y / scale, rcond=None)
        return coef * scale, N

    @property
    def tail_coeffs(self) -> np.ndarray:
        if self._fit is None:
            raise TailModelUnavailable("no reachable class to fit")
        return self._fit[0]

    @property
    def transient(self) -> bool:
        return self.rank > 2

    def series(self, N: int) -> np.ndarray:
        if N > self.N:
            raise ValueError(f"requested order {N} exceeds computed order {self.N}")
        return self.seq[: N + 1].copy()

    def _weighted(self, j: int, N: int) -> np.ndarray:
        key = (j, N)
        w = self._ff_cache.get(key)
        if w is None:
            n = np.arange(N + 1, dtype=float)
            ff = np.ones_like(n)
            for k in range(j):
                ff = ff * (n - k)
            w = ff * self.seq[: N + 1]
            self._ff_cache[key] = w
        return w

    def _tail(self, j: int, s: float, fit) -> float:
        coef, N = fit
        if self.residue is None:
            return 0.0
        g = self.period
        n0 = N + 1
        while n0 % g != self.residue:
            n0 += 1
        tau = -math.log(s) if s < 1.0 else 0.0
        if tau * n0 > 700:
            return 0.0
        st = _stirling1(j)
        d2 = self.rank / 2.0
        total = 0.0
        for i, c in enumerate(coef):
            if c == 0.0:
                continue
            for l, sl in enumerate(st):
                if sl == 0:
                    continue
                b = d2 + i - l
                total += c * sl * class_power_sum(b, tau, n0, g)
        return total * s ** (-j) if j else total

    def _values(self, s: float, kmax: int, half: bool = False, skip_first: bool = False) -> np.ndarray:
        fit, N = (self._fit_half, self.N // 2) if half else (self._fit, self.N)
        out = np.empty(kmax + 1)
        if s == 0.0:
            for j in range(kmax + 1):
                out[j] = float(self._weighted(j, N)[j]) if j <= N else 0.0
            if skip_first:
                out[0] -= 1.0
            return out
        n = self._n_cache.get(N)
        if n is None:
            n = self._n_cache[N] = np.arange(N + 1, dtype=float)
        pw = np.exp(n * math.log(s))  # underflow to 0 is intended
        for j in range(kmax + 1):
            w = self._weighted(j, N)
            lo = j + (1 if (skip_first and j == 0) else 0)
            if s == 1.0 and self.divergence(j) is not None:
                out[j] = math.inf
                continue
            out[j] = float(np.dot(w[lo:], pw[lo - j:N + 1 - j])) + self._tail(j, s, fit)
        return out

    def divergence(self, j: int) -> Divergent | None:
        """Divergence model of ``G^{(j)}`` at ``s = 1``, or None if finite."""
        e = j + 1.0 - self.rank / 2.0
        if e < 0:
            return None
        c0 = float(self.tail_coeffs[0])
        if e == 0:
            return Divergent("log", c0 / self.period)
        amp = c0 * math.gamma(e) / self.period
        if e == 0.5:
            return Divergent("inv_sqrt", amp, 0.5)
        return Divergent("power", amp, e)

    def derivs(self, s: float, kmax: int, half: bool = False) -> np.ndarray:
        """``G^{(j)}(0, x | s)`` for ``j = 0..kmax``; ``inf`` where divergent."""
        if not (0.0 <= s <= 1.0):
            raise ValueError(f"s = {s} outside [0, 1]")
        return self._values(s, kmax, half)

    def gm1(self, s: float, half: bool = False) -> float:
        """``G(s) - 1`` without cancellation for small ``s``."""
        if self.target != self.factor.identity:
            return self.derivs(s, 0, half)[0] - 1.0
        return float(self._values(s, 0, half, skip_first=True)[0])

    def derivs_with_error(self, s: float, kmax: int) -> list:
        full = self._values(s, kmax)
        half = self._values(s, kmax, half=True) if self._fit_half else full
        vals = []
        for j in range(kmax + 1):
            if s == 1.0 and self.divergence(j) is not None:
                vals.append(self.divergence(j))
                continue
            v = float(full[j])
            rounding = 1e-15 * abs(v) * math.sqrt(self.N)
            vals.append(GreenValue(v, abs(v - float(half[j])) + rounding + self.wrap_err * self.N))
        return vals

    def value_at_one(self) -> float:
        return math.inf if self.divergence(0) is not None else float(self._values(1.0, 0)[0])


class FiniteGreen:
    """Green function of a walk on a finite group (diagonal entry at e)."""

    rank = 0
    transient = False
    period = 1

    def __init__(self, f: FactorSpec):
        if f.kind != "finite":
            raise TypeError("FiniteGreen needs a finite factor")
        self.factor = f
        m = len(f.table)
        P = np.zeros((m, m))
        for g in range(m):
            for h, wt in f.step:
                P[g, f.table[g][h]] += wt
        self.P = P
        self.size = m

    def series(self, N: int) -> np.ndarray:
        out = np.empty(N + 1)
        v = np.zeros(self.size)
        v[0] = 1.0
        for n in range(N + 1):
            out[n] = v[0]
            v = v @ self.P
        return out

    def divergence(self, j: int) -> Divergent:
        amp = math.factorial(j) / self.size
        if j == 0:
            return Divergent("power", amp, 1.0)
        return Divergent("power", amp, float(j + 1))

    def gm1(self, s: float, half: bool = False) -> float:
        if s == 1.0:
            return math.inf
        m = self.size
        e0 = np.zeros(m)
        e0[0] = 1.0
        x = np.linalg.solve((np.eye(m) - s * self.P).T, e0)
        return float(s * (x @ self.P)[0])

    def derivs(self, s: float, kmax: int, half: bool = False) -> np.ndarray:
        if not (0.0 <= s <= 1.0):
            raise ValueError(f"s = {s} outside [0, 1]")
        if s == 1.0:
            return np.full(kmax + 1, math.inf)
        m = self.size
        A = np.eye(m) - s * self.P
        e0 = np.zeros(m)
        e0[0] = 1.0
        x = np.linalg.solve(A.T, e0)  # row vector e0^T (I - sP)^{-1}
        out = np.empty(kmax + 1)
        fact = 1.0
        for k in range(kmax + 1):
            if k:
                fact *= k
                x = np.linalg.solve(A.T, self.P.T @ x)
            out[k] = fact * x[0]
        return out

    def derivs_with_error(self, s: float, kmax: int) -> list:
        if s == 1.0:
            return [self.divergence(j) for j in range(kmax + 1)]
        return [GreenValue(v, 1e-14 * abs(v)) for v in self.derivs(s, kmax)]

    def value_at_one(self) -> float:
        return math.inf


@functools.lru_cache(maxsize=64)
def _cached_green(key, f: FactorSpec, N):
    if f.kind == "finite":
        return FiniteGreen(f)
    return LatticeGreen(f, N)


def factor_green(f: FactorSpec, N: int | None = None):
    """Shared evaluator for a factor (cached on the measure, not the id)."""
    return _cached_green(f.key(), f, N)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def lattice_return_series(f: FactorSpec, N: int, method: str | None = None) -> Series:
    """Exact ``p_n(0, 0)`` for ``n <= N`` as a Series with rescale 1."""
    if f.kind != "lattice":
        raise TypeError("lattice factor required")
    seq, _, wrap = exact_returns(f, N, None, method)
    period, residue = period_and_class(f, f.identity)
    mask = (np.arange(seq.size) % period) != residue
    seq[mask] = 0.0
    err = wrap + 1e-16 * N
    return Series(seq, 1.0, err)


def tilt_mgf(f: FactorSpec, u: Sequence[float]) -> float:
    """``sum_x mu(x) exp(u . x)``."""
    u = np.asarray(u, dtype=float)
    xs = np.array([x for x, _ in f.step], dtype=float)
    ws = np.array([w for _, w in f.step])
    return float(np.dot(ws, np.exp(xs @ u)))


def lattice_green_eval(f: FactorSpec, s: float, x: Sequence[int] | None = None, max_deriv: int = 0, N: int | None = None):
    """``G^{(j)}(0, x | s)`` for ``j <= max_deriv`` with error estimates.

    Each entry is a :class:`GreenValue` or, at ``s = 1`` when the defining
    series diverges, a :class:`~greenlab.errors.Divergent`.
    """
    if f.kind != "lattice":
        raise TypeError("lattice factor required")
    if x is None or tuple(x) == f.identity:
        ev = factor_green(f, N)
    else:
        ev = LatticeGreen(f, N, target=x)
    return ev.derivs_with_error(s, max_deriv)


def local_clt_constants(f: FactorSpec, N: int | None = None) -> LatticeAsymptotics:
    """Covariance and return-probability constant of a lattice walk."""
    ev = factor_green(f, N)
    d = f.rank
    cov = _cov(f)
    mean = np.zeros(d)
    for x, wt in f.step:
        mean += wt * np.asarray(x, dtype=float)
    idx = ev._class_indices(ev.N / 2, ev.N)
    y = ev.seq[idx] * idx.astype(float) ** (d / 2.0)
    spread = float((y.max() - y.min()) / abs(y.mean())) if y.size else math.inf
    C0 = float(ev.tail_coeffs[0])
    mult = f.support_lattice_index()
    pred = mult * (2 * math.pi) ** (-d / 2.0) / math.sqrt(float(np.linalg.det(cov)))
    poor = spread > 0.01
    if poor:
        warnings.warn(f"local CLT fit spread {spread:.3%} exceeds 1%", RuntimeWarning, stacklevel=2)
    return LatticeAsymptotics(d, cov, C0, pred, mult, ev.period, spread, mean, poor)
