"""Excursion fixed point of a free-product walk.

A loop at ``e`` splits at its visits to ``e``. Between two visits the walk
makes one step into some factor ``p`` and then wanders until it comes back;
``E_p(r)`` is the r-weighted mass of these excursions. Seen from inside the
factor subgroup ``H_p`` the walk is a lazy walk: every step either stays
(laziness ``d_p = r*beta + sum_{q != p} E_q``, the mass of loops through the
other branches) or moves inside ``H_p`` with weight ``r*a_p*mu_p``. Folding the
laziness into the argument of the factor Green function gives

    E_p = (1 - d_p) * (1 - 1 / G_p(s_p)),   s_p = r * a_p / (1 - d_p),
    G(e, e | r) = 1 / (1 - r*beta - sum_p E_p).

The same system is solved numerically at a given ``r`` and in the ring of
truncated power series (by Newton doubling), and it is differentiated in
``r`` by solving it over truncated Taylor series around a numeric solution.
"""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .config import get_ladder
from .errors import (
    CrossCheckFailed,
    Divergent,
    ModelRequired,
    NoFixedPoint,
    NonMonotoneSamples,
    TailTooLoose,
    ValidationFailed,
)
from .groups import (
    WalkSpec,
    brute_force_first_return,
    brute_force_green_values,
    normalize_word,
    word_mul,
)
from . import lattice as _lattice
from .lattice import FiniteGreen, GreenValue, LatticeGreen, factor_green
from .series import Series, compose_many, radius_estimate, singularity_model_fit

EPS = np.finfo(float).eps

#: a fixed singularity form is preferred to a fitted power law within this factor
PARSIMONY = 5.0


# ---------------------------------------------------------------------------
# result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadiusInfo:
    R: float
    boundary: str  # "branch_point" or "degeneracy_contact"
    contact: tuple  # factor ids with s_p(R) = 1
    accuracy: float
    t_star: float
    coefficient_R: float | None = None
    coefficient_uncertainty: float | None = None

    def __iter__(self):
        return iter((self.R, self.boundary_type, self.accuracy))

    @property
    def boundary_type(self):
        if self.boundary == "degeneracy_contact":
            return ("degeneracy_contact", self.contact)
        return ("branch_point", ())


@dataclass
class ExcursionSystem:
    """Solution of the excursion system.

    In numeric mode ``e``, ``c``, ``s`` are arrays indexed like
    ``walk.factors``; in series mode they are lists of :class:`Series`.
    ``c`` includes the identity-laziness contribution ``r*beta``.
    """

    walk: WalkSpec
    mode: str
    r: float | None
    e: object
    c: object
    s: object
    green: object
    iterations: int
    residual: float
    t: float | None = None
    boundary: bool = False
    contact: tuple = ()

    def factor_ids(self) -> list[int]:
        return [f.id for f in self.walk.factors]


@dataclass(frozen=True)
class FirstReturnKernel:
    """Diagonal-plus-step first-return kernel to one factor subgroup."""

    factor_id: int
    r: float
    diag: float
    steps: dict
    provenance: str = "analytic"
    s: float = 0.0
    factor: object = None

    @property
    def mass(self) -> float:
        return self.diag + math.fsum(self.steps.values())

    def weight(self, x) -> float:
        w = self.steps.get(x, 0.0)
        if self.factor is not None and self.factor.is_identity(x):
            w += self.diag
        return w

    def green(self, x, y) -> float:
        """Green function of the kernel at ``t = 1`` between factor elements."""
        f = self.factor
        z = f.mul(f.inv(x), y)
        if self.r == 0.0:
            return 1.0 if f.is_identity(z) else 0.0
        if f.kind == "finite":
            ev = factor_green(f)
            P = ev.P
            A = np.eye(ev.size) - self.s * P
            rhs = np.zeros(ev.size)
            rhs[z] = 1.0
            g = float(np.linalg.solve(A, rhs)[0])
        elif f.is_identity(z):
            g = float(factor_green(f).derivs(self.s, 0)[0])
        else:
            g = float(LatticeGreen(f, target=z).derivs(self.s, 0)[0])
        return g / (1.0 - self.diag)


@dataclass(frozen=True)
class GreenDerivatives:
    """``G^{(j)}(e, e | r)`` for ``j = 0..k`` as GreenValue or Divergent."""

    r: float
    values: tuple
    at_boundary: bool
    fits: dict = field(default_factory=dict)

    def __getitem__(self, j):
        return self.values[j]

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class AnconaStats:
    r: float
    ratios: tuple
    min: float
    max: float
    constant: float
    max_tail_fraction: float


# ---------------------------------------------------------------------------
# numeric core
# ---------------------------------------------------------------------------

class _Model:
    """Per-walk numeric machinery (factor evaluators and the radius)."""

    def __init__(self, w: WalkSpec):
        self.walk = w
        self.m = w.m
        self.beta = float(w.laziness)
        self.a = w.effective_weights()
        self.ev = [factor_green(f) for f in w.factors]
        self.g1 = np.array([ev.value_at_one() for ev in self.ev])
        lim = [g / a for g, a in zip(self.g1, self.a) if math.isfinite(g)]
        self.t_max = min(lim) if lim else math.inf
        self._radius: RadiusInfo | None = None
        self._lock = threading.Lock()
        self._solved: dict = {}

    # inverse of psi(z) = z G(z)
    def zeta(self, p: int, y: float, half: bool = False) -> float:
        ev = self.ev[p]
        if y <= 0.0:
            return 0.0
        if y >= self.g1[p]:
            return 1.0
        lo, hi = 0.0, min(1.0, y)
        if hi >= 1.0:
            hi = 0.5
            while hi * ev.derivs(hi, 0, half)[0] < y:
                lo = hi
                hi = 1.0 - (1.0 - hi) / 8.0
                if hi >= 1.0:
                    return 1.0
        z = hi
        for _ in range(200):
            g, g1 = ev.derivs(z, 1, half)
            psi = z * g - y
            if psi > 0:
                hi = z
            else:
                lo = z
            dpsi = g + z * g1
            if math.isfinite(dpsi) and dpsi > 0:
                zn = z - psi / dpsi
            else:
                zn = 0.5 * (lo + hi)
            if not (lo < zn < hi):
                zn = 0.5 * (lo + hi)
            if abs(zn - z) <= 2.0 * EPS * z or hi - lo <= 2.0 * EPS * hi:
                return zn
            z = zn
        return z

    def r_of_t(self, t: float, half: bool = False) -> tuple[float, np.ndarray]:
        z = np.array([self.zeta(p, self.a[p] * t, half) for p in range(self.m)])
        denom = float(np.sum(self.a / z)) + self.beta - (self.m - 1) / t
        return 1.0 / denom, z

    def dD_dt(self, t: float) -> float:
        """Derivative of ``1 / r(t)``; zero at an interior maximum of ``r``."""
        out = (self.m - 1) / (t * t)
        for p in range(self.m):
            z = self.zeta(p, self.a[p] * t)
            if z >= 1.0:
                continue
            g, g1 = self.ev[p].derivs(z, 1)
            dpsi = g + z * g1
            if math.isfinite(dpsi):
                out -= self.a[p] * (self.a[p] / dpsi) / (z * z)
        return out

    # -- radius
    def radius(self) -> RadiusInfo:
        with self._lock:
            if self._radius is None:
                self._radius = self._locate()
            return self._radius

    def _locate(self) -> RadiusInfo:
        tm = self.t_max
        if math.isfinite(tm):
            u = np.concatenate([np.linspace(0.01, 0.9, 90), 1.0 - np.logspace(-1.05, -13, 48), [1.0]])
            ts = tm * u
        else:
            ts = np.logspace(-2, 6, 161)
        rs = np.array([self.r_of_t(t)[0] for t in ts])
        i = int(np.argmax(rs))
        if i == ts.size - 1 and not math.isfinite(tm):
            raise NoFixedPoint("radius search ran off the parameter grid")
        t_star, R = float(ts[i]), float(rs[i])
        if 0 < i < ts.size - 1:
            lo, hi = float(ts[i - 1]), float(ts[i + 1])
            if self.dD_dt(lo) < 0 < self.dD_dt(hi):
                t_star = brentq(self.dD_dt, lo, hi, xtol=4 * EPS * hi, rtol=4 * EPS, maxiter=200)
            else:
                opt = minimize_scalar(lambda t: -self.r_of_t(t)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-14 * hi})
                t_star = float(opt.x)
            R = max(R, self.r_of_t(t_star)[0])
        contact: tuple = ()
        boundary = "branch_point"
        if math.isfinite(tm):
            r_end = self.r_of_t(tm)[0]
            if r_end >= R or self.dD_dt(tm) <= 0.0:
                t_star, R = tm, max(R, r_end)
                boundary = "degeneracy_contact"
                contact = tuple(
                    f.id
                    for f, g, a in zip(self.walk.factors, self.g1, self.a)
                    if math.isfinite(g) and a * tm >= g * (1.0 - 1e-9)
                )
        R_half = self.r_of_t(t_star, half=True)[0]
        acc = max(abs(R_half - R) / R, 4.0 * EPS)
        return RadiusInfo(R, boundary, contact, acc, t_star)

    # -- residual and Jacobian of the fixed point
    def _phi(self, r: float, E: np.ndarray, need_jac: bool = True):
        d = r * self.beta + E.sum() - E
        if np.any(d >= 1.0):
            return None
        s = r * self.a / (1.0 - d)
        if np.any(s > 1.0 + 1e-12):
            return None
        s = np.minimum(s, 1.0)
        phi = np.empty(self.m)
        D = np.empty(self.m)
        for p, ev in enumerate(self.ev):
            g, g1 = ev.derivs(float(s[p]), 1) if need_jac else (ev.derivs(float(s[p]), 0)[0], math.nan)
            gm1 = ev.gm1(float(s[p]))
            phi[p] = (1.0 - d[p]) * gm1 / g
            D[p] = s[p] * g1 / (g * g) - gm1 / g
        return phi, D, d, s

    def _D_slope(self, t: float) -> tuple[float, float]:
        """``D(t) = 1/r(t)`` and ``dD/dt`` from one set of ``zeta`` values."""
        D = self.beta - (self.m - 1) / t
        dD = (self.m - 1) / (t * t)
        for p in range(self.m):
            z = self.zeta(p, self.a[p] * t)
            D += self.a[p] / z
            if z >= 1.0:
                continue
            g, g1 = self.ev[p].derivs(z, 1)
            dpsi = g + z * g1
            if math.isfinite(dpsi):
                dD -= self.a[p] * (self.a[p] / dpsi) / (z * z)
        return D, dD

    def _t_of_r(self, r: float, info: RadiusInfo) -> float:
        """Root of ``1/r(t) = 1/r`` on ``[r, t*]`` by safeguarded Newton.

        At a branch point ``D(t) - 1/R`` vanishes quadratically at ``t*``, so
        the iteration runs on its square root, which is close to linear there.
        """
        target = 1.0 / r
        root = info.boundary == "branch_point"
        D_star = 1.0 / info.R

        def fn(t):
            D, dD = self._D_slope(t)
            if not root:
                return D - target, dD
            gap = max(D - D_star, 0.0)
            q = math.sqrt(gap)
            return q - math.sqrt(max(target - D_star, 0.0)), (dD / (2 * q) if q > 0 else -math.inf)

        lo, hi = r, info.t_star
        f_lo, _ = fn(lo)
        if f_lo <= 0:
            return lo
        t = 0.5 * (lo + hi)
        for _ in range(200):
            f, df = fn(t)
            if f > 0:
                lo = t
            else:
                hi = t
            if abs(f) <= 2 * EPS * target:
                return t
            tn = t - f / df if (math.isfinite(df) and df < 0) else 0.5 * (lo + hi)
            if not (lo < tn < hi):
                tn = 0.5 * (lo + hi)
            if abs(tn - t) <= 4 * EPS * t or hi - lo <= 4 * EPS * hi:
                return tn
            t = tn
        return t

    def solve(self, r: float, polish: bool = True) -> ExcursionSystem:
        key = (float(r), bool(polish))
        hit = self._solved.get(key)
        if hit is not None:
            return hit
        out = self._solve(r, polish)
        if len(self._solved) > 4096:
            self._solved.clear()
        self._solved[key] = out
        return out

    def _solve(self, r: float, polish: bool = True) -> ExcursionSystem:
        w = self.walk
        if r < 0:
            raise ValueError("r must be nonnegative")
        if r == 0.0:
            z = np.zeros(self.m)
            return ExcursionSystem(w, "numeric", 0.0, z, z.copy(), z.copy(), 1.0, 0, 0.0, 0.0)
        info = self.radius()
        R = info.R
        if r > R * (1.0 + 1e-12):
            raise NoFixedPoint(f"r = {r!r} exceeds the radius {R!r}")
        boundary = r >= R * (1.0 - 1e-15)
        if boundary:
            t = info.t_star
            r = min(r, R)
        else:
            t = self._t_of_r(r, info)
        _, z = self.r_of_t(t)
        E = np.maximum(r * self.a / z - r / t, 0.0)
        iters = 0
        out = self._phi(r, E, need_jac=polish and not boundary)
        if out is not None and polish and not boundary:
            for _ in range(8):
                phi, D, _, _ = out
                F = E - phi
                if not np.all(np.isfinite(D)):
                    break
                J = np.eye(self.m) - D[:, None] * (1.0 - np.eye(self.m))
                try:
                    step = np.linalg.solve(J, F)
                except np.linalg.LinAlgError:
                    break
                En = E - step
                nxt = self._phi(r, En)
                if nxt is None or np.max(np.abs(En - nxt[0])) > np.max(np.abs(F)):
                    break
                E, out = En, nxt
                iters += 1
                if np.max(np.abs(step)) <= 2 * EPS * max(1.0, float(np.max(E))):
                    break
        if out is None:
            out = self._phi(r, E, need_jac=False)
        if out is None:
            raise NoFixedPoint(f"no admissible excursion solution at r = {r!r}")
        phi, _, d, s = out
        resid = float(np.max(np.abs(E - phi)))
        green = 1.0 / (1.0 - r * self.beta - float(E.sum()))
        contact = info.contact if boundary else ()
        return ExcursionSystem(w, "numeric", r, E, d, s, green, iters, resid, t, bool(boundary), contact)

    # -- Taylor data of the factor Green functions
    def taylor(self, p: int, s0: float, order: int, half: bool = False) -> np.ndarray:
        vals = self.ev[p].derivs(s0, order, half)
        fact = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)
        return vals / fact

    def factor_series(self, p: int, N: int) -> np.ndarray:
        ev = self.ev[p]
        if isinstance(ev, LatticeGreen) and ev.N < N:
            ev = factor_green(self.walk.factors[p], N=max(N, _lattice.DEFAULT_N))
        return ev.series(N)


_MODELS: dict = {}
_MODELS_LOCK = threading.Lock()


def _walk_key(w: WalkSpec) -> tuple:
    return (tuple(f.key() for f in w.factors), tuple(w.weights), float(w.laziness))


def _model(w: WalkSpec) -> _Model:
    key = _walk_key(w)
    with _MODELS_LOCK:
        mdl = _MODELS.get(key)
        if mdl is None:
            if len(_MODELS) > 256:
                _MODELS.clear()
            mdl = _MODELS[key] = _Model(w)
        return mdl


# ---------------------------------------------------------------------------
# the Newton step over truncated series
# ---------------------------------------------------------------------------

def _newton_step(E: list, r_ser: Series, beta: float, a: np.ndarray, compose_fn, fixed_const: bool):
    """One Newton update of the excursion system over truncated series.

    The Jacobian ``I - D (11^T - I)`` is inverted by the Sherman-Morrison
    formula, so the cost is linear in the number of factors.
    """
    m = len(E)
    U = r_ser * beta
    for e in E:
        U = U + e
    ys, zs, res = [], [], []
    for p in range(m):
        d = U - E[p]
        omd = 1.0 - d
        s = (r_ser * a[p]) * omd.reciprocal()
        Gs, G1s = compose_fn(p, s)
        invG = Gs.reciprocal()
        gm1 = Gs - 1.0
        phi = omd * gm1 * invG
        D = s * G1s * invG * invG - gm1 * invG
        rp = E[p] - phi
        inv1D = (D + 1.0).reciprocal()
        ys.append(rp * inv1D)
        zs.append(D * inv1D)
        res.append(rp)
    sy, sz = ys[0], zs[0]
    for p in range(1, m):
        sy, sz = sy + ys[p], sz + zs[p]
    corr = sy * (1.0 - sz).reciprocal()
    out = []
    for p in range(m):
        delta = ys[p] + zs[p] * corr
        c = E[p].coeffs - delta.coeffs
        if fixed_const:
            c = c.copy()
            c[0] = E[p].coeffs[0]
        out.append(Series(c, E[p].rescale))
    return out, res


def _series_compose(outer_g: list, outer_g1: list, k: int):
    def fn(p, s):
        g, g1 = compose_many([outer_g[p].truncate(k), outer_g1[p].truncate(k)], s)
        return g, g1
    return fn


def _taylor_compose(T: list, scales: Sequence[float]):
    """Compose the Taylor expansion of each ``G_p`` about ``s_p(r0)``.

    ``T[p]`` holds ``G_p^{(k)}(s0)/k! * scale^k``, the coefficients in the
    normalized variable ``(s - s0)/scale``.
    """
    def fn(p, s):
        c = s.coeffs.copy()
        c[0] = 0.0
        delta = Series(c, s.rescale)
        n = s.coeffs.size
        tp = T[p]
        g = Series(tp[:n], scales[p])
        g1 = Series(np.arange(1, n + 1) * tp[1 : n + 1] / scales[p], scales[p])
        return tuple(compose_many([g, g1], delta))
    return fn


def _scaled_taylor(mdl: "_Model", p: int, s0: float, order: int, half: bool = False) -> tuple[np.ndarray, float]:
    scale = min(1.0, 1.0 - s0) if s0 < 1.0 else 1.0
    T = mdl.taylor(p, s0, order, half) * scale ** np.arange(order + 1)
    return T, scale


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def locate_radius(w: WalkSpec, cross_check: bool = True, N: int = 1024) -> RadiusInfo:
    """Radius of convergence of ``G(e, e | r)`` and its boundary type.

    The excursion system is parametrized by ``t = G(e, e | r) * r``; then each
    ``s_p`` solves ``s G_p(s) = a_p t`` and ``r(t)`` is explicit. The radius is
    the maximum of ``r(t)`` over the admissible range: an interior maximum is
    a square-root branch point, a maximum at the end of the range (where some
    ``s_p`` reaches 1) is a degeneracy contact.

    With ``cross_check`` the coefficient-ratio radius of the order-``N`` Green
    series must agree to 1e-6 relative.
    """
    mdl = _model(w)
    info = mdl.radius()
    if not cross_check:
        return info
    g = green_series(w, N, rescale=info.R)
    est = radius_estimate(g)
    rel = abs(est.R - info.R) / info.R
    if rel > 1e-6:
        raise CrossCheckFailed(
            f"equation radius {info.R!r} vs coefficient radius {est.R!r} (relative {rel:.2e})"
        )
    return RadiusInfo(info.R, info.boundary, info.contact, info.accuracy, info.t_star, est.R, est.uncertainty)


def solve_excursions(w: WalkSpec, mode: str = "numeric", r: float | None = None, N: int | None = None, rescale: float | None = None) -> ExcursionSystem:
    """Solve the excursion system at a numeric ``r`` or as series to order ``N``."""
    if mode == "numeric":
        if r is None:
            raise ValueError("numeric mode needs r")
        return _model(w).solve(float(r))
    if mode != "series":
        raise ValueError(f"unknown mode {mode!r}")
    if N is None or N < 0:
        raise ValueError("series mode needs an order N >= 0")
    return _solve_series(w, int(N), rescale)


def _solve_series(w: WalkSpec, N: int, rescale: float | None) -> ExcursionSystem:
    mdl = _model(w)
    R = float(rescale) if rescale is not None else mdl.radius().R
    m = mdl.m
    gs, g1s = [], []
    for p in range(m):
        pi = mdl.factor_series(p, N + 1)
        gs.append(Series(pi[: N + 1], 1.0))
        g1s.append(Series(np.arange(1, N + 2) * pi[1 : N + 2], 1.0))
    E = [Series([0.0], R) for _ in range(m)]
    k = 1
    iters = 0
    while k < N + 1:
        k = min(2 * k, N + 1)
        r_ser = Series.variable(k - 1, R)
        E = [e.pad(k - 1) for e in E]
        E, _ = _newton_step(E, r_ser, mdl.beta, mdl.a, _series_compose(gs, g1s, k - 1), fixed_const=True)
        iters += 1
    r_ser = Series.variable(N, R)
    E = [e.pad(N) for e in E]
    E_new, res = _newton_step(E, r_ser, mdl.beta, mdl.a, _series_compose(gs, g1s, N), fixed_const=True)
    iters += 1
    change = max(float(np.max(np.abs(a.coeffs - b.coeffs))) for a, b in zip(E, E_new))
    resid = max(float(np.max(np.abs(x.coeffs))) for x in res)
    scale = max(1.0, max(float(np.max(np.abs(e.coeffs))) for e in E_new))
    err = change + resid + 8 * (N + 1) * EPS * scale
    E = [Series(e.coeffs, R, err) for e in E_new]
    U = r_ser * mdl.beta
    for e in E:
        U = U + e
    c = [U - e for e in E]
    s = [(r_ser * mdl.a[p]) * (1.0 - c[p]).reciprocal() for p in range(m)]
    green = (1.0 - U).reciprocal()
    return ExcursionSystem(w, "series", None, E, c, s, green, iters, resid)


def green_series(w: WalkSpec, N: int, rescale: float | None = None) -> Series:
    """``G(e, e | r)`` to order ``N`` with rescale ``R`` (the radius by default)."""
    return _solve_series(w, int(N), rescale).green


def green_value(w: WalkSpec, r: float) -> float:
    return float(_model(w).solve(float(r)).green)


def _jets(mdl: _Model, sysn: ExcursionSystem, K: int, half: bool = False):
    """Taylor coefficients of ``E_p``, ``c_p`` and ``G`` about ``r0`` to order K.

    The series variable is ``x = (r - r0) / rho`` with ``rho = min(1, R - r0)``
    so coefficients stay O(1) up to the radius; the returned series carry
    ``rho`` as their rescale.
    """
    r0 = float(sysn.r)
    m = mdl.m
    rho = min(1.0, mdl.radius().R - r0)
    data = [_scaled_taylor(mdl, p, float(sysn.s[p]), K + 1, half) for p in range(m)]
    T = [d[0] for d in data]
    scales = [d[1] for d in data]
    r_ser = Series(np.concatenate([[r0, rho], np.zeros(max(K - 1, 0))])[: K + 1], rho)
    E = [Series(np.concatenate([[sysn.e[p]], np.zeros(K)]), rho) for p in range(m)]
    steps = 1
    while (1 << steps) <= K + 1:
        steps += 1
    for _ in range(steps + 1):
        E, _ = _newton_step(E, r_ser, mdl.beta, mdl.a, _taylor_compose(T, scales), fixed_const=True)
    U = r_ser * mdl.beta
    for e in E:
        U = U + e
    G = (1.0 - U).reciprocal()
    c = [U - e for e in E]
    return E, c, G


def _derivs_from(ser: Series, K: int) -> np.ndarray:
    """``f^{(j)}(r0)`` for ``j <= K`` from a normalized Taylor series."""
    j = np.arange(K + 1)
    fact = np.array([math.factorial(k) for k in range(K + 1)], dtype=float)
    return ser.coeffs[: K + 1] * fact / ser.rescale**j


def green_jet(w: WalkSpec, r: float, K: int = 3, half: bool = False) -> np.ndarray:
    """``G^{(j)}(e, e | r)`` for ``j <= K`` at an interior point."""
    mdl = _model(w)
    sysn = mdl.solve(float(r))
    if r == 0.0:
        return _zero_jet(w, K)
    _, _, G = _jets(mdl, sysn, K, half)
    return _derivs_from(G, K)


def _zero_jet(w: WalkSpec, K: int) -> np.ndarray:
    g = green_series(w, K, rescale=1.0).coeffs
    fact = np.array([math.factorial(j) for j in range(K + 1)], dtype=float)
    return g * fact


def laziness_jet(w: WalkSpec, r: float, K: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """r-derivatives of ``c_p(r)`` (rows = factors) and of ``E_p``."""
    mdl = _model(w)
    sysn = mdl.solve(float(r))
    fact = np.array([math.factorial(j) for j in range(K + 1)], dtype=float)
    if r == 0.0:
        sys_s = _solve_series(w, K, 1.0)
        return (np.array([c.coeffs * fact for c in sys_s.c]), np.array([e.coeffs * fact for e in sys_s.e]))
    E, c, _ = _jets(mdl, sysn, K)
    return np.array([_derivs_from(x, K) for x in c]), np.array([_derivs_from(x, K) for x in E])


def kernel_t_jet(w: WalkSpec, fid: int, r: float, K: int = 3, half: bool = False) -> np.ndarray:
    """t-derivatives at ``t = 1`` of the first-return kernel Green function.

    For the kernel ``t * (c_p delta + r a_p mu_p)`` the diagonal Green function
    is ``G_p(t r a_p / (1 - t c_p)) / (1 - t c_p)``.
    """
    mdl = _model(w)
    p = w.index_of(fid)
    sysn = mdl.solve(float(r))
    c, s0 = float(sysn.c[p]), float(sysn.s[p])
    if r == 0.0:
        out = np.zeros(K + 1)
        out[0] = 1.0
        return out
    T, scale = _scaled_taylor(mdl, p, s0, K, half)
    # s(t) = t r a / (1 - t c) is singular-free near t = 1; normalize tau so
    # that s moves by about ``scale`` per unit
    ds = r * mdl.a[p] / (1.0 - c) ** 2
    rho = min(1.0, scale / ds)
    tau = Series(np.concatenate([[1.0, rho], np.zeros(max(K - 1, 0))])[: K + 1], rho)
    omd = 1.0 - tau * c
    inv = omd.reciprocal()
    s = (tau * (r * mdl.a[p])) * inv
    dc = s.coeffs.copy()
    dc[0] = 0.0
    g = compose_many([Series(T[: K + 1], scale)], Series(dc, rho))[0]
    GH = g * inv
    return _derivs_from(GH, K)


def boundary_ladder(R: float, exponents: Sequence[float] | None = None) -> np.ndarray:
    if exponents is None:
        kmin, kmax, pts = get_ladder()
        ex = np.linspace(kmin, kmax, pts)
    else:
        ex = np.asarray(exponents, dtype=float)
    return np.sort(R * (1.0 - 10.0 ** (-ex)))


def classify_samples(samples, R: float, bounded_advantage: float = 3.0):
    """Decide bounded plateau vs divergence for samples approaching ``R``.

    Returns ``(entry, fit)`` where ``entry`` is a GreenValue (plateau) or a
    Divergent carrying the preferred unbounded model.
    """
    fit = singularity_model_fit(samples, R, models=("bounded", "inv_sqrt", "log", "power"))
    unb = [fit.fits[k] for k in ("inv_sqrt", "log", "power")]
    best_unb = min(unb, key=lambda m: m.residual)
    bnd = fit.fits["bounded"]
    tiny = 1e-300
    if (best_unb.residual + tiny) >= bounded_advantage * (bnd.residual + tiny):
        # plateau: value by the bounded model, error from a refit on the inner half
        arr = np.asarray(samples)
        inner = arr[arr.shape[0] // 3 :]
        err = abs(bnd.amplitude - float(arr[-1, 1]))
        try:
            sub = singularity_model_fit(inner, R, models=("bounded",), min_points=5, min_decades=1.0)
            err = abs(sub.amplitude - bnd.amplitude)
        except NonMonotoneSamples:
            pass
        return GreenValue(float(bnd.amplitude), err + abs(bnd.amplitude) * bnd.residual), fit
    # fixed-form models win over the free power law unless clearly worse
    fixed = min((fit.fits["inv_sqrt"], fit.fits["log"]), key=lambda m: m.residual)
    m = fixed if fixed.residual <= PARSIMONY * (fit.fits["power"].residual + tiny) else fit.fits["power"]
    return Divergent(m.model, float(m.amplitude), m.exponent), fit


def green_derivatives_at(w: WalkSpec, r: float, max_deriv: int = 3, allow_divergent: bool = True) -> GreenDerivatives:
    """``G^{(j)}(e, e | r)``, ``j <= max_deriv``, with error estimates.

    Interior points use Taylor jets of the excursion system; errors come from
    repeating the computation with the half-order tail completion of the
    factor Green functions. At ``r = R`` each derivative of order >= 1 is
    decided from a ladder ``R (1 - 10^-k)``, ``k`` in [2, 6].
    """
    if max_deriv < 0:
        raise ValueError("max_deriv must be >= 0")
    mdl = _model(w)
    info = mdl.radius()
    R = info.R
    if r > R * (1.0 + 1e-12):
        raise NoFixedPoint(f"r = {r!r} exceeds the radius {R!r}")
    if r < R * (1.0 - 1e-15):
        if r == 0.0:
            vals = _zero_jet(w, max_deriv)
            return GreenDerivatives(0.0, tuple(GreenValue(float(v), 1e-15 * abs(v)) for v in vals), False)
        full = green_jet(w, r, max_deriv)
        half = green_jet(w, r, max_deriv, half=True)
        vals = tuple(
            GreenValue(float(v), abs(float(v) - float(h)) + 64 * EPS * abs(float(v)) * (j + 1))
            for j, (v, h) in enumerate(zip(full, half))
        )
        return GreenDerivatives(float(r), vals, False)
    sysb = mdl.solve(R)
    values = [GreenValue(float(sysb.green), abs(float(sysb.green)) * info.accuracy * 4)]
    fits = {}
    if max_deriv >= 1:
        ladder = boundary_ladder(R)
        jets = np.array([green_jet(w, float(rr), max_deriv) for rr in ladder])
        for j in range(1, max_deriv + 1):
            samples = list(zip(ladder, jets[:, j]))
            entry, fit = classify_samples(samples, R)
            fits[j] = fit
            if isinstance(entry, Divergent) and not allow_divergent:
                raise ModelRequired(f"G^({j}) diverges at the radius ({entry.model})")
            values.append(entry)
    return GreenDerivatives(R, tuple(values), True, fits)


def first_return_kernel(
    w: WalkSpec,
    factor_id: int,
    r: float,
    validate: bool = False,
    L: int = 12,
    budget: int | None = None,
) -> FirstReturnKernel:
    """First-return kernel to factor ``factor_id`` at ``r``.

    Excursions that leave the factor subgroup at ``h`` come back at ``h``, so
    the kernel is ``c_p(r)`` on the diagonal plus ``r a_p mu_p`` inside the
    factor. With ``validate`` the kernel is compared with a brute-force path
    enumeration of length ``<= L``; a mismatch beyond the tail estimate is a
    hard error.
    """
    mdl = _model(w)
    p = w.index_of(factor_id)
    f = w.factors[p]
    sysn = mdl.solve(float(r))
    if r == 0.0:
        return FirstReturnKernel(factor_id, 0.0, 0.0, {}, "analytic", 0.0, f)
    steps = {}
    for x, wt in f.step:
        x = f._canon(x)
        steps[x] = steps.get(x, 0.0) + r * mdl.a[p] * wt
    ker = FirstReturnKernel(factor_id, float(r), float(sysn.c[p]), steps, "analytic", float(sysn.s[p]), f)
    if not validate:
        return ker
    kwargs = {} if budget is None else {"budget": budget}
    bf = brute_force_first_return(w, factor_id, float(r), L, R=mdl.radius().R, **kwargs)
    keys = set(bf.kernel) | set(steps) | {f.identity}
    for x in keys:
        want = ker.weight(x)
        got = bf.weight(x)
        if got > want * (1.0 + 1e-12) + 1e-15 or want - got > 2.0 * bf.tail + 1e-12:
            raise ValidationFailed(
                f"first-return weight at {x}: analytic {want!r}, brute force {got!r} (tail {bf.tail:.3g})"
            )
    return FirstReturnKernel(factor_id, float(r), ker.diag, steps, "brute-force-validated", ker.s, f)


def _norm(w, word):
    return normalize_word(word, w)


def ancona_probe(
    w: WalkSpec,
    r: float,
    samples: Sequence[tuple],
    L: int = 14,
    budget: int | None = None,
) -> AnconaStats:
    """Ratios ``G(e, xy) / (G(e, x) G(e, y))`` for normal-form splittings.

    ``samples`` holds pairs of words (tuples of ``(factor_id, element)``).
    Green values are truncated path sums with a geometric tail estimate.
    """
    R = _model(w).radius().R
    pairs = []
    targets = set()
    for x, y in samples:
        x, y = _norm(w, x), _norm(w, y)
        xy = word_mul(x, y, w)
        pairs.append((x, y, xy))
        targets.update((x, y, xy))
    kwargs = {} if budget is None else {"budget": budget}
    vals = brute_force_green_values(w, sorted(targets, key=lambda t: (len(t), repr(t))), float(r), L, R, **kwargs)
    worst = 0.0
    for t, (v, tail) in vals.items():
        if v <= 0:
            raise TailTooLoose(f"no paths reach {t} within {L} steps")
        frac = tail / v
        worst = max(worst, frac)
        if frac > 0.1:
            raise TailTooLoose(f"tail estimate {tail:.3g} exceeds 10% of G(e, {t}) = {v:.3g}")
    ratios = tuple(vals[xy][0] / (vals[x][0] * vals[y][0]) for x, y, xy in pairs)
    lo, hi = min(ratios), max(ratios)
    return AnconaStats(float(r), ratios, lo, hi, max(hi, 1.0 / lo), worst)


def lazified(w: WalkSpec, alpha: float) -> WalkSpec:
    """The walk ``alpha * delta_e + (1 - alpha) * mu``."""
    if not (0.0 <= alpha < 1.0):
        raise ValueError("alpha must lie in [0, 1)")
    return w.with_laziness(alpha + (1.0 - alpha) * w.laziness)


def write_excursions_csv(path, systems: Sequence[ExcursionSystem]) -> None:
    """One row per numeric solution: r, e_p, c_p, s_p per factor id."""
    if not systems:
        raise ValueError("nothing to write")
    ids = systems[0].factor_ids()
    header = ["r"] + [f"e_{i}" for i in ids] + [f"c_{i}" for i in ids] + [f"s_{i}" for i in ids] + ["G", "residual"]
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for sy in systems:
            if sy.mode != "numeric":
                raise ValueError("only numeric solutions are tabulated")
            wr.writerow([fmt(sy.r)] + [fmt(x) for x in sy.e] + [fmt(x) for x in sy.c] + [fmt(x) for x in sy.s] + [fmt(sy.green), fmt(sy.residual)])


__all__ = [
    "AnconaStats",
    "ExcursionSystem",
    "FirstReturnKernel",
    "GreenDerivatives",
    "RadiusInfo",
    "ancona_probe",
    "boundary_ladder",
    "classify_samples",
    "first_return_kernel",
    "green_derivatives_at",
    "green_jet",
    "green_series",
    "green_value",
    "kernel_t_jet",
    "laziness_jet",
    "lazified",
    "locate_radius",
    "solve_excursions",
    "write_excursions_csv",
]
