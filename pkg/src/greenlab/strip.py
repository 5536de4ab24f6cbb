"""Kernels on Z^d x {0..N-1} that commute with Z^d translations.

Such a kernel is a finite family of step laws ``K[(j, j')]`` on Z^d. Tilting
by ``exp(u . x)`` gives an N x N nonnegative matrix ``F(u)`` whose
Perron-Frobenius root ``lambda(u)`` is log-convex; the spectral radius of the
kernel is ``min_u lambda(u)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import (
    BudgetExceeded,
    InsufficientCoefficients,
    OscillatoryRatios,
    Reducible,
    RouteMismatch,
    UnboundedBelowDirection,
)
from .groups import hermite_rows, lattice_index
from .series import Series, radius_estimate

EPS = np.finfo(float).eps
PROPAGATION_BUDGET = 60_000_000  # grid cells times states


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StripKernel:
    """Translation-invariant kernel on ``Z^d x {0..N-1}``.

    ``entries[(j, jp)]`` maps integer d-tuples to nonnegative weights.
    """

    d: int
    N: int
    entries: dict
    tag: str = ""

    def __post_init__(self):
        if self.d < 1 or self.N < 1:
            raise ValueError("need d >= 1 and N >= 1")
        clean = {}
        for (j, jp), law in self.entries.items():
            if not (0 <= j < self.N and 0 <= jp < self.N):
                raise ValueError(f"state pair {(j, jp)} outside 0..{self.N - 1}")
            row = {}
            for x, wt in law.items():
                x = tuple(int(v) for v in x)
                if len(x) != self.d:
                    raise ValueError(f"displacement {x} is not a {self.d}-tuple")
                wt = float(wt)
                if not (wt >= 0.0 and math.isfinite(wt)):
                    raise ValueError("weights must be finite and nonnegative")
                if wt > 0:
                    row[x] = row.get(x, 0.0) + wt
            if row:
                clean[(int(j), int(jp))] = row
        object.__setattr__(self, "entries", clean)
        if not clean:
            raise Reducible("kernel has no positive weight")

    def arrays(self):
        """Flat arrays (src, dst, displacement, weight) over all positive entries."""
        src, dst, disp, w = [], [], [], []
        for (j, jp), law in sorted(self.entries.items()):
            for x, wt in sorted(law.items()):
                src.append(j)
                dst.append(jp)
                disp.append(x)
                w.append(wt)
        return (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                np.array(disp, dtype=np.int64).reshape(-1, self.d), np.array(w))

    def scaled(self, c: float) -> "StripKernel":
        return StripKernel(self.d, self.N, {k: {x: c * v for x, v in law.items()} for k, law in self.entries.items()}, self.tag)

    def is_symmetric(self, tol: float = 1e-14) -> bool:
        for (j, jp), law in self.entries.items():
            other = self.entries.get((jp, j), {})
            for x, wt in law.items():
                if abs(other.get(tuple(-v for v in x), 0.0) - wt) > tol:
                    return False
        return True

    def total_mass(self) -> np.ndarray:
        return tilted_matrix(self, np.zeros(self.d))

    def max_step(self) -> int:
        return max(max(abs(v) for v in x) for law in self.entries.values() for x in law)


@dataclass(frozen=True)
class EigenTriple:
    lam: float
    C: np.ndarray
    nu: np.ndarray
    residual: float = 0.0
    method: str = "power"

    def __iter__(self):
        return iter((self.lam, self.C, self.nu))


@dataclass(frozen=True)
class StripAsymptotics:
    v: np.ndarray
    lam: float
    alpha: np.ndarray  # alpha[j, jp]
    beta: np.ndarray
    Sigma: np.ndarray
    multiplicity: float
    C: np.ndarray
    nu: np.ndarray


@dataclass(frozen=True)
class RhoPoint:
    r: float
    rho: float
    u: tuple
    rho_prime_eigen: float
    rho_prime_fd: float

    @property
    def mismatch(self) -> float:
        return abs(self.rho_prime_eigen - self.rho_prime_fd) / max(abs(self.rho_prime_eigen), 1e-300)


@dataclass(frozen=True)
class DegeneracyResult:
    factor_id: int
    degenerate: bool
    margin: float
    uncertainty: float
    near_critical: bool
    rho_R: float
    rank: int
    flagged: bool = False
    note: str = ""

    def __iter__(self):
        return iter((self.degenerate, self.margin))


@dataclass(frozen=True)
class LocalLimitTrace:
    n: np.ndarray
    sup: np.ndarray
    asymptotics: StripAsymptotics = field(repr=False, default=None)

    @property
    def monotone_dyadic(self) -> bool:
        return bool(np.all(np.diff(self.sup) < 0))


# ---------------------------------------------------------------------------
# matrices and eigen-triples
# ---------------------------------------------------------------------------

def tilted_matrix(K: StripKernel, u: Sequence[float]) -> np.ndarray:
    """``F[j, j'] = sum_x K[(j, j')](x) exp(u . x)``."""
    u = np.asarray(u, dtype=float).reshape(K.d)
    F = np.zeros((K.N, K.N))
    for (j, jp), law in K.entries.items():
        xs = np.array(list(law.keys()), dtype=float)
        ws = np.array(list(law.values()))
        F[j, jp] += float(np.dot(ws, np.exp(xs @ u)))
    return F


def tilted_derivatives(K: StripKernel, u: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """``dF/du_i`` (shape d x N x N) and ``d2F/du_i du_k`` (d x d x N x N)."""
    u = np.asarray(u, dtype=float).reshape(K.d)
    d, N = K.d, K.N
    D1 = np.zeros((d, N, N))
    D2 = np.zeros((d, d, N, N))
    for (j, jp), law in K.entries.items():
        xs = np.array(list(law.keys()), dtype=float)
        ws = np.array(list(law.values())) * np.exp(xs @ u)
        D1[:, j, jp] += xs.T @ ws
        D2[:, :, j, jp] += (xs.T * ws) @ xs
    return D1, D2


def _strongly_connected(A: np.ndarray) -> bool:
    n = A.shape[0]
    adj = A > 0

    def reach(M):
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for k in np.nonzero(M[i])[0]:
                if int(k) not in seen:
                    seen.add(int(k))
                    stack.append(int(k))
        return len(seen) == n

    return reach(adj) and reach(adj.T)


def _normalize(lam, C, nu, F):
    C = np.abs(C)
    nu = np.abs(nu)
    C = C / np.max(C)
    nu = nu / float(nu @ C)
    res = max(float(np.max(np.abs(F @ C - lam * C))), float(np.max(np.abs(nu @ F - lam * nu))))
    return lam, C, nu, res


def dominant_eigen(F: np.ndarray, tol: float = 1e-13, max_iter: int = 2000) -> EigenTriple:
    """Perron-Frobenius triple of a nonnegative irreducible matrix.

    Shifted power iteration with a Rayleigh-quotient estimate; the shift
    removes periodicity. Slow convergence falls back to a dense solver.
    ``C`` is scaled to max 1 and ``nu . C = 1``.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("square matrix required")
    if np.any(F < 0) or not np.all(np.isfinite(F)):
        raise ValueError("matrix must be finite and nonnegative")
    n = F.shape[0]
    if n == 1:
        if F[0, 0] <= 0:
            raise Reducible("zero 1x1 matrix")
        return EigenTriple(float(F[0, 0]), np.ones(1), np.ones(1), 0.0, "trivial")
    if not _strongly_connected(F):
        raise Reducible("transition graph is not strongly connected")
    scale = float(np.max(F))
    sigma = 0.5 * scale
    B = F + sigma * np.eye(n)

    def power(M):
        x = np.ones(n) / n
        lam = 0.0
        for it in range(max_iter):
            y = M @ x
            lam_new = float(x @ y / (x @ x))
            y /= np.max(y)
            if it > 2 and np.max(np.abs(y - x)) <= tol and abs(lam_new - lam) <= tol * abs(lam_new):
                return lam_new - sigma, y, True
            x, lam = y, lam_new
        return lam - sigma, x, False

    lam_r, C, okr = power(B)
    _, nu, okl = power(B.T)
    method = "power"
    if okr and okl:
        lam = float(nu @ F @ C / (nu @ C))
        lam, C, nu, res = _normalize(lam, C, nu, F)
    if not (okr and okl) or res > 1e-12 * max(lam, 1.0):
        vals, vecs = np.linalg.eig(F)
        k = int(np.argmax(vals.real))
        lam = float(vals[k].real)
        C = vecs[:, k].real
        vals_l, vecs_l = np.linalg.eig(F.T)
        kl = int(np.argmax(vals_l.real))
        nu = vecs_l[:, kl].real
        lam, C, nu, res = _normalize(lam, C, nu, F)
        method = "dense"
    if np.any(C <= 0) or np.any(nu <= 0):
        raise Reducible("Perron vectors are not strictly positive")
    return EigenTriple(lam, C, nu, res, method)


def lambda_grad(K: StripKernel, u) -> tuple[float, np.ndarray, EigenTriple]:
    F = tilted_matrix(K, u)
    et = dominant_eigen(F)
    D1, _ = tilted_derivatives(K, u)
    g = np.array([float(et.nu @ D1[i] @ et.C) for i in range(K.d)])
    return et.lam, g, et


def _hessian_fd(K: StripKernel, u: np.ndarray, h: float = 1e-5) -> np.ndarray:
    d = K.d
    H = np.zeros((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        gp = lambda_grad(K, u + e)[1]
        gm = lambda_grad(K, u - e)[1]
        H[i] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def minimize_lambda(K: StripKernel, grad_tol: float = 1e-10, max_iter: int = 100) -> tuple[np.ndarray, float]:
    """``(u_r, rho)`` with ``rho = min_u lambda(F(u))``.

    Damped Newton: eigen-formula gradient, finite-difference Hessian and
    Armijo backtracking on ``lambda``.
    """
    u = np.zeros(K.d)
    lam, g, _ = lambda_grad(K, u)
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= grad_tol * max(1.0, lam):
            break
        H = _hessian_fd(K, u)
        try:
            w, V = np.linalg.eigh(H)
            w = np.maximum(w, 1e-12 * max(1.0, float(np.max(np.abs(w)))))
            step = -(V @ ((V.T @ g) / w))
        except np.linalg.LinAlgError:
            step = -g
        if float(step @ g) >= 0:
            step = -g
        t = 1.0
        while True:
            un = u + t * step
            lam_n, g_n, _ = lambda_grad(K, un)
            if lam_n <= lam + 1e-4 * t * float(step @ g) or t < 1e-12:
                break
            t *= 0.5
        if np.max(np.abs(un)) > 1e3:
            raise UnboundedBelowDirection("tilt grows without bound; kernel is not irreducible in space")
        if lam_n > lam and t < 1e-12:
            break
        u, lam, g = un, lam_n, g_n
    return u, float(lam)


# ---------------------------------------------------------------------------
# rho(r) for a kernel family
# ---------------------------------------------------------------------------

def rho_curve(
    family: Callable[[float], StripKernel],
    r_grid: Sequence[float],
    dfamily: Callable[[float], StripKernel] | None = None,
    fd_step: float | None = None,
    tol: float = 1e-6,
    check_positive: bool = True,
) -> list[RhoPoint]:
    """``rho(r)``, the minimizer ``u_r`` and ``rho'(r)`` by two routes.

    The eigen route evaluates ``nu . F'(u_r) . C`` with ``F'`` from the
    supplied derivative family (or a centered difference of ``F`` at fixed
    ``u``); the other route differences ``rho`` itself. Disagreement beyond
    ``tol`` relative raises RouteMismatch.
    """
    grid = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("r grid must be strictly increasing")
    out = []
    for r in grid:
        K = family(float(r))
        u, rho = minimize_lambda(K)
        et = dominant_eigen(tilted_matrix(K, u))
        h = fd_step if fd_step is not None else 1e-4 * max(abs(r), 1e-3)
        if dfamily is not None:
            Fp = tilted_matrix(dfamily(float(r)), u)
        else:
            Fp = (tilted_matrix(family(r + h), u) - tilted_matrix(family(r - h), u)) / (2 * h)
        d_eig = float(et.nu @ Fp @ et.C)
        rp = minimize_lambda(family(r + h))[1]
        rm = minimize_lambda(family(r - h))[1]
        d_fd = (rp - rm) / (2 * h)
        pt = RhoPoint(float(r), rho, tuple(float(x) for x in u), d_eig, d_fd)
        if pt.mismatch > tol:
            raise RouteMismatch(f"rho'({r:.6g}): eigen {d_eig!r} vs difference {d_fd!r}")
        if check_positive and np.all(Fp >= 0) and np.any(Fp > 0) and not d_eig > 0:
            raise RouteMismatch(f"rho'({r:.6g}) = {d_eig!r} is not positive for a nonnegative F'")
        out.append(pt)
    return out


def write_rho_curve_csv(path, points: Sequence[RhoPoint]) -> None:
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    d = len(points[0].u) if points else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "rho", "rho_prime_eigen", "rho_prime_fd"] + [f"u_{i}" for i in range(d)])
        for p in points:
            w.writerow([fmt(p.r), fmt(p.rho), fmt(p.rho_prime_eigen), fmt(p.rho_prime_fd)] + [fmt(x) for x in p.u])


def factor_kernel_family(w, factor_id: int):
    """``r -> c_p(r) delta + r a_p mu_p`` and its r-derivative as strip kernels."""
    from .excursions import laziness_jet, solve_excursions

    f = w.factor(factor_id)
    if f.kind != "lattice":
        raise TypeError("strip kernels need a lattice factor")
    p = w.index_of(factor_id)
    a = float(w.effective_weights()[p])
    zero = tuple([0] * f.rank)

    def build(diag, scale):
        law = {}
        for x, wt in f.step:
            law[tuple(x)] = law.get(tuple(x), 0.0) + scale * wt
        law[zero] = law.get(zero, 0.0) + diag
        return StripKernel(f.rank, 1, {(0, 0): law}, tag=f"factor-{factor_id}")

    def family(r):
        sysn = solve_excursions(w, r=r)
        return build(float(sysn.c[p]), r * a)

    def dfamily(r):
        dc, _ = laziness_jet(w, r, 1)
        return build(float(dc[p][1]), a)

    return family, dfamily


# ---------------------------------------------------------------------------
# degeneracy
# ---------------------------------------------------------------------------

def _ladder_extrapolate(r: np.ndarray, y: np.ndarray, R: float) -> tuple[float, float]:
    """Value at ``R`` of ``y = y_R + c1 sqrt(h) + c2 h + c3 h^1.5`` and an uncertainty."""
    h = R - r

    def fit(hh, yy):
        A = np.column_stack([np.ones_like(hh), np.sqrt(hh), hh, hh**1.5])
        c, *_ = np.linalg.lstsq(A, yy, rcond=None)
        return float(c[0]), A @ c - yy

    yR, res = fit(h, y)
    alt, _ = fit(h[1:], y[1:])  # drop the point farthest from R
    alt2, _ = fit(h[:-1], y[:-1])  # drop the point closest to R
    unc = max(abs(alt - yR), abs(alt2 - yR), float(np.max(np.abs(res))), 64 * EPS * abs(yR))
    return yR, unc


def degeneracy_test(w, factor_id: int, near_factor: float = 3.0) -> DegeneracyResult:
    """Is the first-return kernel to a factor at the radius of spectral radius 1?

    ``rho_p(r)`` is the spectral radius of ``c_p(r) delta + r a_p mu_p``: its
    total mass for symmetric steps, ``min_u lambda`` otherwise. ``rho_p(R)``
    is extrapolated from the ladder ``R (1 - 10^-k)``, ``k`` in [2, 6].
    """
    from .excursions import boundary_ladder, locate_radius, solve_excursions

    f = w.factor(factor_id)
    p = w.index_of(factor_id)
    a = float(w.effective_weights()[p])
    R = locate_radius(w, cross_check=False).R
    ladder = boundary_ladder(R)
    symmetric = f.kind == "finite" or _symmetric_factor(f)
    rhos = []
    for r in ladder:
        c = float(solve_excursions(w, r=float(r)).c[p])
        if symmetric:
            rhos.append(c + r * a)
        else:
            fam, _ = factor_kernel_family(w, factor_id)
            rhos.append(minimize_lambda(fam(float(r)))[1])
    rhoR, unc = _ladder_extrapolate(ladder, np.array(rhos), R)
    margin = 1.0 - rhoR
    degenerate = margin <= unc
    near = (not degenerate) and margin <= near_factor * unc
    rank = f.rank if f.kind == "lattice" else 0
    flagged = False
    note = ""
    if degenerate and rank < 5:
        flagged = True
        note = f"degeneracy along a rank-{rank} factor is numerically suspect"
    return DegeneracyResult(factor_id, degenerate, margin, unc, near, rhoR, rank, flagged, note)


def _symmetric_factor(f) -> bool:
    law = {}
    for x, wt in f.step:
        law[tuple(x)] = law.get(tuple(x), 0.0) + wt
    return all(abs(law.get(tuple(-v for v in x), 0.0) - wt) <= 1e-14 for x, wt in law.items())


# ---------------------------------------------------------------------------
# exact propagation and the local limit
# ---------------------------------------------------------------------------

def _grid(K: StripKernel, n_max: int):
    s = K.max_step()
    half = n_max * s
    side = 2 * half + 1
    cells = side**K.d
    if cells * K.N > PROPAGATION_BUDGET:
        raise BudgetExceeded(f"propagation grid of {cells * K.N} cells exceeds the budget", PROPAGATION_BUDGET)
    strides = np.array([side ** (K.d - 1 - i) for i in range(K.d)], dtype=np.int64)
    return half, side, cells, strides


def propagate(K: StripKernel, n_max: int, start: int = 0, record: Sequence[int] | None = None):
    """Exact ``p_n((0, start), (x, j'))``.

    Returns ``(returns, snapshots)`` where ``returns[n, j']`` is the mass at
    ``x = 0`` and ``snapshots[n]`` the full ``(N, side^d)`` array for each
    ``n`` in ``record``.
    """
    half, side, cells, strides = _grid(K, n_max)
    src, dst, disp, w = K.arrays()
    shift = disp @ strides
    center = int(half * strides.sum())
    cur = np.zeros((K.N, cells))
    cur[start, center] = 1.0
    returns = np.zeros((n_max + 1, K.N))
    returns[0] = cur[:, center]
    want = set(record or ())
    snaps = {}
    if 0 in want:
        snaps[0] = cur.copy()
    for n in range(1, n_max + 1):
        cur = kernels.strip_propagate(cur, src, dst, shift, w)
        returns[n] = cur[:, center]
        if n in want:
            snaps[n] = cur.copy()
    return returns, snaps, (half, side, strides)


def growth_estimate(K: StripKernel, n_max: int | None = None, state: int = 0) -> tuple[float, float]:
    """``lim sup p_n((0,j),(0,j))^{1/n}`` from the return-probability series."""
    if n_max is None:
        n_max = 2048 if K.d == 1 else 192
    ret, _, _ = propagate(K, n_max, start=state)
    seq = ret[:, state]
    lam0 = dominant_eigen(tilted_matrix(K, np.zeros(K.d))).lam
    n = np.arange(seq.size)
    b = seq * np.exp(-n * math.log(lam0))
    est = radius_estimate(Series(b, 1.0 / lam0))
    rho = 1.0 / est.R
    return rho, est.uncertainty * rho / est.R


def _space_time_lattice(K: StripKernel):
    """Lattice generated by cycle displacements (x, 1 per step) and state potentials."""
    d, N = K.d, K.N
    pot = {0: np.zeros(d + 1, dtype=np.int64)}
    edges = [(j, jp, np.array(list(x) + [1], dtype=np.int64)) for (j, jp), law in K.entries.items() for x in law]
    changed = True
    while changed:
        changed = False
        for j, jp, lab in edges:
            if j in pot and jp not in pot:
                pot[jp] = pot[j] + lab
                changed = True
    if len(pot) < N:
        raise Reducible("some states are unreachable from state 0")
    gens = [lab + pot[j] - pot[jp] for j, jp, lab in edges]
    basis = hermite_rows(gens, d + 1)
    if len(basis) < d + 1:
        raise Reducible("cycle displacements do not span a full-rank space-time lattice")
    idx = lattice_index(gens, d + 1)
    B = np.array(basis, dtype=float)
    period = abs(int(round(math.gcd(*[int(g[-1]) for g in gens if g[-1] != 0])))) if any(g[-1] for g in gens) else 0
    return pot, B, idx, period


def strip_asymptotics(K: StripKernel, v: Sequence[float] | None = None, h: float = 1e-4) -> StripAsymptotics:
    """Local-limit parameters at tilt ``v``: drift, covariance, amplitudes."""
    v = np.zeros(K.d) if v is None else np.asarray(v, dtype=float)
    lam, g, et = lambda_grad(K, v)
    beta = g / lam
    H = np.zeros((K.d, K.d))
    for i in range(K.d):
        e = np.zeros(K.d)
        e[i] = h
        lp, gp, _ = lambda_grad(K, v + e)
        lm, gm, _ = lambda_grad(K, v - e)
        H[i] = (gp / lp - gm / lm) / (2 * h)
    Sigma = 0.5 * (H + H.T)
    if np.any(np.linalg.eigvalsh(Sigma) <= 0):
        raise Reducible("covariance of the tilted kernel is not positive definite")
    _, _, idx, period = _space_time_lattice(K)
    mult = idx / max(period, 1)
    alpha = mult * np.outer(et.C, et.nu) / math.sqrt(float(np.linalg.det(Sigma)))
    return StripAsymptotics(v, lam, alpha, beta, Sigma, mult, et.C, et.nu)


def strip_local_limit_check(
    K: StripKernel,
    v: Sequence[float] | None = None,
    n_max: int = 2048,
    normalize: bool = True,
    start: int = 0,
) -> LocalLimitTrace:
    """Sup deviation of the scaled return probabilities from the local limit.

    At dyadic ``n <= n_max`` computes
    ``a_n(x, j') = (2 pi n)^{d/2} p_n((0,start),(x,j')) e^{v.x} / lambda^n
    - alpha[start, j'] exp(-(x - n beta)^T Sigma^{-1} (x - n beta) / (2n))``
    on the reachable space-time coset and returns its sup over ``x, j'``.
    """
    v = np.zeros(K.d) if v is None else np.asarray(v, dtype=float)
    if normalize:
        lam = dominant_eigen(tilted_matrix(K, v)).lam
        K = K.scaled(1.0 / lam)
    asy = strip_asymptotics(K, v)
    if abs(asy.lam - 1.0) > 1e-9:
        raise ValueError(f"kernel is not normalized at the tilt: lambda = {asy.lam!r}")
    pot, B, _, _ = _space_time_lattice(K)
    Binv = np.linalg.inv(B)
    ns = [n for n in (2**k for k in range(3, 40)) if n <= n_max]
    if not ns:
        raise ValueError("n_max must be at least 8")
    _, snaps, (half, side, strides) = propagate(K, ns[-1], start=start, record=ns)
    coords = np.stack(np.unravel_index(np.arange(side**K.d), (side,) * K.d), axis=1) - half
    Sinv = np.linalg.inv(asy.Sigma)
    tilt = np.exp(coords @ v)
    sups = []
    for n in ns:
        arr = snaps[n]
        best = 0.0
        for jp in range(K.N):
            y = np.concatenate([coords, np.full((coords.shape[0], 1), n)], axis=1) - (pot[jp] - pot[start])
            c = y @ Binv
            on = np.all(np.abs(c - np.round(c)) < 1e-6, axis=1)
            z = coords[on] - n * asy.beta
            gauss = np.exp(-0.5 * np.einsum("ij,jk,ik->i", z, Sinv, z) / n)
            scaled = (2 * math.pi * n) ** (K.d / 2) * arr[jp, on] * tilt[on]
            dev = np.abs(scaled - asy.alpha[start, jp] * gauss)
            if dev.size:
                best = max(best, float(np.max(dev)))
        sups.append(best)
    return LocalLimitTrace(np.array(ns), np.array(sups), asy)


# ---------------------------------------------------------------------------
# random kernels for tests and scenarios
# ---------------------------------------------------------------------------

def random_strip_kernel(rng: np.random.Generator, d: int, N: int, symmetric: bool = True, lazy: float = 0.2) -> StripKernel:
    """Random irreducible aperiodic kernel with unit-range steps.

    Every state carries a holding weight ``lazy`` at displacement 0 and
    nearest-neighbour steps along each axis, so the space-time lattice is all
    of ``Z^{d+1}``.
    """
    entries: dict = {}

    def add(j, jp, x, wt):
        entries.setdefault((j, jp), {})
        entries[(j, jp)][x] = entries[(j, jp)].get(x, 0.0) + wt

    zero = tuple([0] * d)
    for j in range(N):
        add(j, j, zero, lazy)
        for i in range(d):
            e = [0] * d
            e[i] = 1
            wp = float(rng.uniform(0.2, 1.0))
            wm = wp if symmetric else float(rng.uniform(0.2, 1.0))
            add(j, j, tuple(e), wp)
            add(j, j, tuple(-x for x in e), wm)
    for j in range(N):
        for jp in range(j + 1, N):
            wt = float(rng.uniform(0.1, 0.6))
            x = tuple(int(k) for k in rng.integers(-1, 2, size=d))
            add(j, jp, x, wt)
            if symmetric:
                add(jp, j, tuple(-k for k in x), wt)
            else:
                add(jp, j, tuple(int(k) for k in rng.integers(-1, 2, size=d)), float(rng.uniform(0.1, 0.6)))
    K = StripKernel(d, N, entries)
    mass = tilted_matrix(K, np.zeros(d)).sum(axis=1).max()
    return K.scaled(1.0 / mass)


def affine_family(K0: StripKernel, K1: StripKernel):
    """``r -> K0 + r K1`` and its (constant) r-derivative ``K1``."""
    if (K0.d, K0.N) != (K1.d, K1.N):
        raise ValueError("kernels must share dimension and strip width")

    def family(r):
        entries: dict = {}
        for K, c in ((K0, 1.0), (K1, float(r))):
            for key, law in K.entries.items():
                tgt = entries.setdefault(key, {})
                for x, wt in law.items():
                    tgt[x] = tgt.get(x, 0.0) + c * wt
        return StripKernel(K0.d, K0.N, entries)

    return family, lambda r: K1


def scalar_srw() -> StripKernel:
    return StripKernel(1, 1, {(0, 0): {(1,): 0.5, (-1,): 0.5}}, tag="srw")


__all__ = [
    "affine_family",
    "DegeneracyResult",
    "EigenTriple",
    "LocalLimitTrace",
    "RhoPoint",
    "StripAsymptotics",
    "StripKernel",
    "degeneracy_test",
    "dominant_eigen",
    "factor_kernel_family",
    "growth_estimate",
    "minimize_lambda",
    "propagate",
    "random_strip_kernel",
    "rho_curve",
    "scalar_srw",
    "strip_asymptotics",
    "strip_local_limit_check",
    "tilted_matrix",
    "write_rho_curve_csv",
]
