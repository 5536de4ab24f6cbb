"""Rescaled truncated power series and coefficient-asymptotics tools.

A :class:`Series` stores ``b_n = a_n * R**n`` for an underlying series
``sum a_n r**n`` and a fixed rescale ``R``. Keeping ``R`` close to the true
radius of convergence keeps the stored coefficients polynomial in size, so
orders in the thousands neither underflow nor overflow.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import config, kernels
from .errors import (
    IncompatibleRescale,
    InsufficientCoefficients,
    NonInvertibleConstantTerm,
    NonMonotoneSamples,
    NonNilpotentInner,
    OscillatoryRatios,
    RadiusDriftDetected,
)

EPS = np.finfo(float).eps
_RESCALE_RTOL = 1e-14


def _mul_raw(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if config.get_precision() == "dd":
        return kernels.conv_trunc_comp(a, b, n)
    return kernels.conv_trunc(a, b, n)


def _unit_roundoff() -> float:
    # compensated products behave as if computed in twice the working precision
    return EPS * EPS if config.get_precision() == "dd" else EPS


class Series:
    """Truncated power series with a rescale and a uniform error bound.

    Parameters
    ----------
    coeffs : array_like
        Stored coefficients ``b_0 .. b_N``.
    rescale : float
        ``R`` such that ``b_n = a_n R^n``.
    err : float
        Uniform absolute bound on the error of every stored coefficient.
    """

    __slots__ = ("_b", "_rescale", "_err")

    def __init__(self, coeffs: Iterable[float], rescale: float = 1.0, err: float = 0.0):
        b = np.array(coeffs, dtype=float, copy=True).reshape(-1)
        if b.size == 0:
            raise ValueError("a series needs at least one coefficient")
        if not np.all(np.isfinite(b)):
            raise FloatingPointError("non-finite series coefficient")
        if not (rescale > 0 and math.isfinite(rescale)):
            raise ValueError(f"rescale must be positive and finite, got {rescale}")
        if not (err >= 0):
            raise ValueError("error bound must be nonnegative")
        b.flags.writeable = False
        self._b = b
        self._rescale = float(rescale)
        self._err = float(err)

    # -- basic accessors
    @property
    def coeffs(self) -> np.ndarray:
        return self._b

    @property
    def rescale(self) -> float:
        return self._rescale

    @property
    def err_bound(self) -> float:
        return self._err

    @property
    def order(self) -> int:
        return self._b.size - 1

    def __len__(self) -> int:
        return self._b.size

    def __repr__(self) -> str:
        head = ", ".join(f"{c:.6g}" for c in self._b[:6])
        more = ", ..." if self._b.size > 6 else ""
        return f"Series([{head}{more}], order={self.order}, rescale={self._rescale:.12g}, err={self._err:.2e})"

    # -- construction helpers
    @classmethod
    def constant(cls, c: float, order: int, rescale: float = 1.0) -> "Series":
        b = np.zeros(order + 1)
        b[0] = c
        return cls(b, rescale)

    @classmethod
    def variable(cls, order: int, rescale: float = 1.0) -> "Series":
        """The series ``r`` itself, stored as ``(0, R, 0, ...)``."""
        b = np.zeros(order + 1)
        if order >= 1:
            b[1] = rescale
        return cls(b, rescale)

    @classmethod
    def from_raw(cls, a: Sequence[float], rescale: float = 1.0, err: float = 0.0) -> "Series":
        """Build from raw coefficients ``a_n`` (multiplies by ``R^n``)."""
        a = np.asarray(a, dtype=float)
        n = np.arange(a.size)
        with np.errstate(over="ignore", under="ignore"):
            scale = np.exp(n * math.log(rescale))
        return cls(a * scale, rescale, err)

    def raw(self) -> np.ndarray:
        """Raw coefficients ``a_n``; may underflow to zero for large ``n``."""
        n = np.arange(self._b.size)
        with np.errstate(over="ignore", under="ignore"):
            return self._b * np.exp(-n * math.log(self._rescale))

    # -- shape manipulation
    def truncate(self, order: int) -> "Series":
        if order > self.order:
            return self.pad(order)
        if order == self.order:
            return self
        return Series(self._b[: order + 1], self._rescale, self._err)

    def pad(self, order: int) -> "Series":
        if order <= self.order:
            return self if order == self.order else self.truncate(order)
        b = np.zeros(order + 1)
        b[: self._b.size] = self._b
        return Series(b, self._rescale, self._err)

    def rescaled(self, new_rescale: float) -> "Series":
        """Same underlying series stored with a different rescale."""
        n = np.arange(self._b.size)
        factor = np.exp(n * math.log(new_rescale / self._rescale))
        b = self._b * factor
        return Series(b, new_rescale, self._err * float(np.max(factor)))

    # -- compatibility
    def _check(self, other: "Series") -> None:
        if abs(self._rescale - other._rescale) > _RESCALE_RTOL * max(self._rescale, other._rescale):
            raise IncompatibleRescale(f"rescales {self._rescale!r} and {other._rescale!r} differ")

    def _aligned(self, other: "Series") -> tuple[np.ndarray, np.ndarray, int]:
        self._check(other)
        n = max(self._b.size, other._b.size)
        a = self._b if self._b.size == n else np.pad(self._b, (0, n - self._b.size))
        b = other._b if other._b.size == n else np.pad(other._b, (0, n - other._b.size))
        return a, b, n

    # -- ring operations
    def __add__(self, other):
        if isinstance(other, Series):
            a, b, _ = self._aligned(other)
            c = a + b
            err = self._err + other._err + EPS * float(np.max(np.abs(c)))
            return Series(c, self._rescale, err)
        c = self._b.copy()
        c[0] += float(other)
        return Series(c, self._rescale, self._err + EPS * abs(c[0]))

    __radd__ = __add__

    def __neg__(self):
        return Series(-self._b, self._rescale, self._err)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Series):
            a, b, n = self._aligned(other)
            c = _mul_raw(a, b, n)
            l1a = float(np.sum(np.abs(a)))
            l1b = float(np.sum(np.abs(b)))
            mxa = float(np.max(np.abs(a)))
            mxb = float(np.max(np.abs(b)))
            gamma = n * _unit_roundoff()
            err = (
                self._err * l1b
                + other._err * l1a
                + self._err * other._err * n
                + gamma * min(l1a * mxb, l1b * mxa)
            )
            return Series(c, self._rescale, err)
        s = float(other)
        return Series(self._b * s, self._rescale, self._err * abs(s) + EPS * abs(s) * float(np.max(np.abs(self._b))))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Series):
            return self * other.reciprocal()
        return self * (1.0 / float(other))

    def reciprocal(self) -> "Series":
        """Multiplicative inverse by Newton doubling."""
        a = self._b
        if a[0] == 0.0 or abs(a[0]) <= self._err:
            raise NonInvertibleConstantTerm("constant term is zero or within its error bound")
        n = a.size
        c = np.array([1.0 / a[0]])
        k = 1
        while k < n:
            k = min(2 * k, n)
            ac = _mul_raw(a[:k], c, k)
            ac[0] -= 1.0
            c = np.concatenate([c, np.zeros(k - c.size)]) - _mul_raw(c, ac, k)
        resid = _mul_raw(a, c, n)
        resid[0] -= 1.0
        l1c = float(np.sum(np.abs(c)))
        err = l1c * (float(np.max(np.abs(resid))) + self._err * l1c) + n * _unit_roundoff() * l1c
        return Series(c, self._rescale, err)

    def differentiate(self) -> "Series":
        """Coefficients of the derivative in ``r``; the order drops by one."""
        if self.order == 0:
            return Series([0.0], self._rescale, 0.0)
        n = np.arange(1, self._b.size)
        c = n * self._b[1:] / self._rescale
        return Series(c, self._rescale, self._err * self.order / self._rescale)

    def antiderivative(self) -> "Series":
        """Termwise integral with zero constant term; the order grows by one."""
        n = np.arange(1, self._b.size + 1)
        c = np.concatenate([[0.0], self._b * self._rescale / n])
        return Series(c, self._rescale, self._err * self._rescale)

    def compose(self, inner: "Series") -> "Series":
        """``self(inner(r))`` truncated to the order of ``inner``."""
        return compose_many([self], inner)[0]

    def evaluate(self, r: float) -> float:
        x = r / self._rescale
        return float(np.polynomial.polynomial.polyval(x, self._b))

    def __call__(self, r: float) -> float:
        return self.evaluate(r)

    # -- I/O
    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "b_n", "errBound", "rescale"])
            for i, b in enumerate(self._b):
                w.writerow([i, format(float(b), ".17g"), format(self._err, ".17g"), format(self._rescale, ".17g")])

    @classmethod
    def from_csv(cls, path) -> "Series":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty series dump")
        b = [float(r["b_n"]) for r in rows]
        return cls(b, float(rows[0]["rescale"]), float(rows[0]["errBound"]))


def compose_many(outers: Sequence[Series], inner: Series) -> list[Series]:
    """Compose several outer series with one inner series.

    Baby-step/giant-step evaluation: the powers ``u^0..u^m`` of the inner
    argument are shared by every outer series, blocks of ``m`` coefficients are
    combined by one matrix product, and the blocks are joined by Horner's rule
    in ``u^m``. Cost is about ``2*sqrt(N)`` series products per outer series.

    The error bound of a composition is a first-order estimate (rounding in
    the products plus the inner error times a Lipschitz factor of the outer
    series), not a worst-case bound.
    """
    n = inner.coeffs.size
    g0 = inner.coeffs[0]
    if g0 != 0.0 and abs(g0) > inner.err_bound:
        raise NonNilpotentInner(f"inner series has constant term {g0!r}")
    m = max(1, int(math.ceil(math.sqrt(n))))
    nblocks = int(math.ceil(n / m))
    unit = _unit_roundoff()
    cache: dict[float, tuple[np.ndarray, np.ndarray, float]] = {}
    results = []
    for f in outers:
        rf = f.rescale
        if rf not in cache:
            u = inner.coeffs / rf
            u = u.copy()
            u[0] = 0.0
            pw = np.empty((m + 1, n))
            pw[0] = 0.0
            pw[0, 0] = 1.0
            pw[1] = u
            for j in range(2, m + 1):
                pw[j] = _mul_raw(pw[j - 1], u, n)
            cache[rf] = (pw, u, float(np.sum(np.abs(u))))
        pw, u, unorm = cache[rf]
        fb = np.zeros(nblocks * m)
        k = min(n, f.coeffs.size)
        fb[:k] = f.coeffs[:k]
        blocks = fb.reshape(nblocks, m) @ pw[:m]
        acc = blocks[-1].copy()
        for i in range(nblocks - 2, -1, -1):
            acc = _mul_raw(acc, pw[m], n) + blocks[i]
        q = min(unorm, 1.0)
        kk = np.arange(fb.size)
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            lip = float(np.nansum(kk[1:] * np.abs(fb[1:]) * q ** (kk[1:] - 1)))
            mag = float(np.nansum(np.abs(fb) * q**kk))
        err = 4.0 * n * unit * max(float(np.max(np.abs(acc))), mag) + lip * inner.err_bound / rf + f.err_bound * max(1.0, mag)
        if not math.isfinite(err):
            err = math.inf
        results.append(Series(acc, inner.rescale, err))
    return results


def series_ring_ops(a: Series, b: Series | None, op: str) -> Series:
    """Dispatch one ring operation by name.

    ``op`` is one of ``add``, ``mul``, ``reciprocal``, ``compose`` or
    ``differentiate``. For ``compose`` the result is ``a(b(r))``.
    """
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "reciprocal":
        return a.reciprocal()
    if op == "compose":
        return a.compose(b)
    if op == "differentiate":
        return a.differentiate()
    raise ValueError(f"unknown series operation {op!r}")


# ---------------------------------------------------------------------------
# coefficient asymptotics
# ---------------------------------------------------------------------------

def dominant_class(b: np.ndarray) -> tuple[int, int]:
    """Return ``(start, step)`` of the parity class carrying the tail.

    Step is 2 when one parity class vanishes identically on the last half of
    the coefficients; otherwise all indices are used (step 1) but callers
    that need parity-robust ratios still stride by 2 from ``start``.
    """
    n = b.size
    half = b[n // 2:]
    idx = np.arange(n // 2, n)
    even = float(np.sum(np.abs(half[idx % 2 == 0])))
    odd = float(np.sum(np.abs(half[idx % 2 == 1])))
    start = 0 if even >= odd else 1
    small, big = min(even, odd), max(even, odd)
    step = 2 if big > 0 and small <= 1e-12 * big else 1
    return start, step


@dataclass(frozen=True)
class RadiusEstimate:
    R: float
    uncertainty: float
    raw_ratios: np.ndarray = field(repr=False, default=None)

    def __iter__(self):
        return iter((self.R, self.uncertainty))


def radius_estimate(s: Series, levels: int = 6) -> RadiusEstimate:
    """Estimate the radius of convergence from the coefficient tail.

    Uses ``R_n = Rhat * sqrt(b_n / b_{n+2})`` on the dominant parity class,
    sampled at ``n = N, N/2, N/4, ...`` and extrapolated in ``h = 1/n``. The
    uncertainty is the spread of the last three extrapolated values.
    """
    b = s.coeffs
    start, _ = dominant_class(b)
    cls_idx = np.arange(start, b.size, 2)
    vals = b[cls_idx]
    nonzero = np.count_nonzero(vals)
    if nonzero < 64:
        raise InsufficientCoefficients(f"only {nonzero} nonzero coefficients on the dominant class")
    # use the longest trailing run of strictly positive or negative values
    if np.any(vals[-nonzero:] == 0):
        raise OscillatoryRatios("zeros inside the dominant parity class tail")
    sign = np.sign(vals[-1])
    tail_len = 0
    for v in vals[::-1]:
        if np.sign(v) != sign:
            break
        tail_len += 1
    if tail_len < 64:
        raise OscillatoryRatios("coefficients change sign inside the tail window")
    idx = cls_idx[-tail_len:]
    tv = np.abs(vals[-tail_len:])
    ratios = s.rescale * np.sqrt(tv[:-1] / tv[1:])  # R_n at n = idx[:-1]
    n_of = idx[:-1].astype(float)
    top = n_of[-1]
    picks = []
    for i in range(levels):
        target = top / 2 ** i
        j = int(np.argmin(np.abs(n_of - target)))
        if n_of[j] < 8 or (picks and j == picks[-1]):
            break
        picks.append(j)
    picks = picks[::-1]
    if len(picks) < 3:
        raise InsufficientCoefficients("not enough dyadic sample points for extrapolation")
    h = 1.0 / n_of[picks]
    y = ratios[picks]
    est = _richardson_diagonal(h, y)
    last = est[-3:]
    R = float(est[-1])
    rel_jump = float(np.max(np.abs(np.diff(ratios[-16:])))) / R if ratios.size > 16 else 0.0
    if rel_jump > 0.25:
        raise OscillatoryRatios("successive ratio estimates jump by more than 25%")
    unc = float(np.max(last) - np.min(last))
    unc = max(unc, 64 * EPS * R)
    return RadiusEstimate(R, unc, ratios)


def _richardson_diagonal(h: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Polynomial extrapolation to ``h = 0`` using growing subsets of points.

    Entry ``k`` of the result uses the ``k+1`` finest points.
    """
    k = y.size
    out = []
    for m in range(1, k + 1):
        hh = h[k - m:]
        yy = y[k - m:]
        # Neville for the value at 0
        p = list(yy)
        for j in range(1, m):
            for i in range(m - 1, j - 1, -1):
                p[i] = p[i] + (p[i] - p[i - 1]) * hh[i] / (hh[i - j] - hh[i])
        out.append(p[-1])
    return np.array(out)


@dataclass(frozen=True)
class ExponentFit:
    kappa: float
    uncertainty: float
    drift: float
    kappa_n: np.ndarray = field(repr=False, default=None)

    def __iter__(self):
        return iter((self.kappa, self.uncertainty))


def coefficient_exponent_fit(
    s: Series,
    R: float,
    window: tuple[float, float] = (0.25, 1.0),
    drift_tol: float = 1e-3,
) -> ExponentFit:
    """Fit ``kappa`` in ``a_n R^n ~ C n^{-kappa}`` from the coefficient tail.

    ``kappa_n = log(b_n / b_m) / log(m / n)`` with ``m`` the class index
    nearest ``2n``; pairs span the window ``[N/4, N]``. One Richardson step is
    taken by regressing ``kappa_n`` on ``1/n``.
    """
    b = np.asarray(s.coeffs, dtype=float)
    N = b.size - 1
    n_all = np.arange(b.size)
    if R != s.rescale:
        b = b * np.exp(n_all * math.log(R / s.rescale))
    start, _ = dominant_class(b)
    cls = np.arange(start, b.size, 2)
    cls = cls[cls > 0]
    if cls.size < 256:
        raise InsufficientCoefficients(f"dominant class has {cls.size} < 256 terms")
    vals = b[cls]
    lo_n, hi_n = window[0] * N, window[1] * N
    sel = (cls >= lo_n) & (cls <= hi_n)
    if np.any(vals[sel] <= 0):
        raise InsufficientCoefficients("nonpositive coefficients inside the fit window")
    logb = {int(k): math.log(v) for k, v in zip(cls[sel], vals[sel])}
    ks = []
    kap = []
    for k in cls[sel]:
        m = 2 * int(k) + start
        if m > hi_n or m not in logb:
            continue
        ks.append(int(k))
        kap.append((logb[int(k)] - logb[m]) / math.log(m / int(k)))
    if len(ks) < 8:
        raise InsufficientCoefficients("too few coefficient pairs inside the window")
    ks_a = np.array(ks, dtype=float)
    kap_a = np.array(kap)
    A1 = np.column_stack([np.ones_like(ks_a), 1.0 / ks_a])
    c1, *_ = np.linalg.lstsq(A1, kap_a, rcond=None)
    A2 = np.column_stack([np.ones_like(ks_a), 1.0 / ks_a, 1.0 / ks_a**2])
    c2, *_ = np.linalg.lstsq(A2, kap_a, rcond=None)
    kappa = float(c1[0])
    resid = kap_a - A1 @ c1
    unc = max(abs(float(c2[0]) - kappa), float(np.max(np.abs(resid))), 1e-12)

    # drift: log b_n = a - kappa log n + c1/n + c2/n^2 + delta n over the window,
    # in the scaled variable x = n/N; delta*N measures a relative error in R
    x = cls[sel].astype(float) / N
    yy = np.log(vals[sel])
    D = np.column_stack([np.ones_like(x), -np.log(x), 1.0 / x, 1.0 / x**2, x])
    cd, *_ = np.linalg.lstsq(D, yy, rcond=None)
    drift = float(cd[4])
    if abs(drift) > drift_tol:
        raise RadiusDriftDetected(f"linear drift {drift:.3e} over the window exceeds {drift_tol:.1e}")
    return ExponentFit(kappa, unc, drift, kap_a)


# ---------------------------------------------------------------------------
# singularity models
# ---------------------------------------------------------------------------

UNBOUNDED_MODELS = ("inv_sqrt", "log", "power")


@dataclass(frozen=True)
class ModelFit:
    model: str
    amplitude: float
    residual: float
    params: tuple
    exponent: float | None = None


@dataclass(frozen=True)
class SingularityFit:
    best: str
    amplitude: float
    residual: float
    fits: dict
    advantage: float
    indistinguishable: bool

    def __iter__(self):
        return iter((self.best, self.amplitude, self.residual))

    def fit(self, name: str) -> ModelFit:
        return self.fits[name]


def _wlsq(columns: list[np.ndarray], f: np.ndarray) -> tuple[np.ndarray, float]:
    A = np.column_stack(columns)
    w = 1.0 / np.maximum(np.abs(f), np.finfo(float).tiny)
    coef, *_ = np.linalg.lstsq(A * w[:, None], f * w, rcond=None)
    rel = (A @ coef - f) * w
    return coef, float(np.sqrt(np.mean(rel**2)))


def _fit_power(h: np.ndarray, f: np.ndarray, beta: float | None) -> ModelFit:
    if beta is not None:
        coef, res = _wlsq([h ** (-beta), np.ones_like(h)], f)
        return ModelFit("power", float(coef[0]), res, tuple(coef), beta)

    def objective(bt):
        return _wlsq([h ** (-bt), np.ones_like(h)], f)[1]

    grid = np.linspace(0.05, 3.0, 60)
    vals = [objective(g) for g in grid]
    g0 = grid[int(np.argmin(vals))]
    lo, hi = max(0.02, g0 - 0.05), g0 + 0.05
    opt = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    bt = float(opt.x)
    coef, res = _wlsq([h ** (-bt), np.ones_like(h)], f)
    return ModelFit("power", float(coef[0]), res, tuple(coef), bt)


def singularity_model_fit(
    samples: Sequence[tuple[float, float]],
    R: float,
    models: Sequence[str] = ("inv_sqrt", "log", "power"),
    power_beta: float | None = None,
    min_points: int = 12,
    min_decades: float = 2.0,
) -> SingularityFit:
    """Fit boundary samples against singularity models and rank them.

    Models are ``inv_sqrt`` (C h^{-1/2} + D), ``log`` (C log(1/h) + D),
    ``power`` (C h^{-beta} + D, beta fixed or fitted) and ``bounded``
    (A + B h^{1/2} + C h, amplitude = A), with ``h = R - r``. Residuals are
    relative RMS values; ``advantage`` is the runner-up residual over the best.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be a sequence of (r, f) pairs")
    r, f = arr[:, 0], arr[:, 1]
    if r.size < min_points:
        raise NonMonotoneSamples(f"need at least {min_points} samples, got {r.size}")
    if np.any(np.diff(r) <= 0) or np.any(r >= R):
        raise NonMonotoneSamples("abscissae must increase strictly toward R")
    h = R - r
    if math.log10(h.max() / h.min()) < min_decades - 1e-9:
        raise NonMonotoneSamples(f"R - r spans fewer than {min_decades} decades")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite sample values")
    one = np.ones_like(h)
    fits: dict[str, ModelFit] = {}
    for name in models:
        if name == "inv_sqrt":
            c, res = _wlsq([h ** -0.5, one], f)
            fits[name] = ModelFit(name, float(c[0]), res, tuple(c), 0.5)
        elif name == "log":
            c, res = _wlsq([np.log(1.0 / h), one], f)
            fits[name] = ModelFit(name, float(c[0]), res, tuple(c))
        elif name == "power":
            fits[name] = _fit_power(h, f, power_beta)
        elif name == "bounded":
            c, res = _wlsq([one, np.sqrt(h), h], f)
            fits[name] = ModelFit(name, float(c[0]), res, tuple(c))
        else:
            raise ValueError(f"unknown model {name!r}")
    order = sorted(fits.values(), key=lambda m: m.residual)
    best = order[0]
    floor = 1e-300
    if len(order) > 1:
        advantage = (order[1].residual + floor) / (best.residual + floor)
    else:
        advantage = math.inf
    return SingularityFit(best.model, best.amplitude, best.residual, fits, advantage, advantage < 2.0)
