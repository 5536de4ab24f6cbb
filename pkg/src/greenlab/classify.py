"""Convergent/divergent classification of free-product walks.

The functionals ``I^(k)(r)`` sum products of ``k`` Green functions along
chains through the whole group; ``J^(k)_p(r)`` restricts the chain to one
factor subgroup. Both come from derivative cascades,
``F_1 = d/dr (r G)``, ``F_k = d/dr (r^2 F_{k-1}) = k! r^{k-1} I^(k)``, applied
to ``G(e, e | r)`` in ``r`` and to the first-return kernel Green function in
its own variable ``t`` at ``t = 1``.

A walk is convergent when ``I^(1)`` stays bounded up to the radius. That is
decided by fitting a bounded plateau against divergent models on a ladder
of points approaching the radius.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import config
from .errors import CrossCheckFailed, Divergent, InconclusiveClassification, NonMonotoneSamples
from .excursions import (
    GreenValue,
    _jets,
    _model,
    boundary_ladder,
    classify_samples,
    green_jet,
    green_series,
    kernel_t_jet,
    locate_radius,
)
from .series import Series, coefficient_exponent_fit, singularity_model_fit
from .strip import DegeneracyResult, degeneracy_test

VERDICT_CONVERGENT = "convergent"
VERDICT_DIVERGENT = "divergent_spectrally_positive_recurrent"


# ---------------------------------------------------------------------------
# cascades
# ---------------------------------------------------------------------------

def cascade(taylor: Series, x0: float, kmax: int) -> np.ndarray:
    """``I^(k)`` for ``k = 1..kmax`` from a Taylor series of ``G`` about ``x0``.

    ``taylor`` holds normalized coefficients (its rescale is the step of the
    normalized variable). At ``x0 = 0`` every ``I^(k)`` equals ``G(0)``.
    """
    rho = taylor.rescale
    n = taylor.coeffs.size
    if x0 == 0.0:
        return np.full(kmax, float(taylor.coeffs[0]))
    x = Series(np.concatenate([[x0, rho], np.zeros(max(n - 2, 0))])[:n], rho)
    out = np.empty(kmax)
    F = (x * taylor).differentiate()
    for k in range(1, kmax + 1):
        if k > 1:
            xk = x.truncate(F.order)
            F = (xk * xk * F).differentiate()
        out[k - 1] = float(F.coeffs[0]) / (math.factorial(k) * x0 ** (k - 1))
    return out


def _i_values(w, r: float, kmax: int, half: bool = False) -> np.ndarray:
    if r == 0.0:
        return np.ones(kmax)
    mdl = _model(w)
    sysn = mdl.solve(float(r))
    _, _, G = _jets(mdl, sysn, kmax, half)
    return cascade(G, float(r), kmax)


def _j_values(w, fid: int, r: float, kmax: int, half: bool = False) -> np.ndarray:
    if r == 0.0:
        return np.ones(kmax)
    d = kernel_t_jet(w, fid, float(r), kmax, half)
    fact = np.array([math.factorial(j) for j in range(kmax + 1)], dtype=float)
    return cascade(Series(d / fact, 1.0), 1.0, kmax)


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, (Divergent,)):
        return v.to_json()
    if isinstance(v, GreenValue):
        return {"value": float(v.value), "err": float(v.err)}
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class Functionals:
    r: float
    I: list
    J: dict

    def to_json(self) -> dict:
        return {"r": self.r, "I": _jsonable(self.I), "J": _jsonable(self.J)}


@dataclass
class ExponentCheck:
    kappa: float
    uncertainty: float
    kappa_star: float
    agreement: float
    within: bool
    j: int
    model: str
    expected_model: str
    model_advantage: float
    model_ok: bool
    N: int

    def to_json(self) -> dict:
        return _jsonable(asdict(self))


@dataclass
class Report:
    R: float
    boundary_type: str
    contact: tuple
    radius_accuracy: float
    margins: dict
    d: int | None
    verdict: str
    kappa_star: float
    kappa: float | None = None
    kappa_uncertainty: float | None = None
    singularity: dict = field(default_factory=dict)
    near_critical: bool = False
    flags: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "R_mu": self.R,
            "boundaryType": self.boundary_type,
            "contact": list(self.contact),
            "radiusAccuracy": self.radius_accuracy,
            "margins": _jsonable(self.margins),
            "d": self.d,
            "verdict": self.verdict,
            "kappa_star": self.kappa_star,
            "kappa": self.kappa,
            "kappa_uncertainty": self.kappa_uncertainty,
            "singularity": _jsonable(self.singularity),
            "near_critical": self.near_critical,
            "flags": list(self.flags),
            "diagnostics": _jsonable(self.diagnostics),
        }
        return out


@dataclass
class MonitorResult:
    r: np.ndarray
    k: int
    I: np.ndarray
    J: dict
    ratio: np.ndarray
    bound_ratio: np.ndarray
    bound_constant: float
    subset_violations: list
    bound_growing: bool
    ratio_spread_last_decade: float

    @property
    def ok(self) -> bool:
        return not self.subset_violations and not self.bound_growing


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def compute_functionals(w, r: float, kmax: int = 3) -> Functionals:
    """``I^(1..kmax)(r)`` and ``J^(1..kmax)_p(r)`` with error estimates.

    At the radius, entries are decided on the boundary ladder and divergent
    ones are returned as Divergent with their fitted model.
    """
    if not 1 <= kmax <= 3:
        raise ValueError("kmax must be 1, 2 or 3")
    R = _model(w).radius().R
    ids = [f.id for f in w.factors]
    if r < R * (1.0 - 1e-15):
        full = _i_values(w, r, kmax)
        half = _i_values(w, r, kmax, half=True)
        I = [GreenValue(float(a), abs(float(a) - float(b)) + 1e-14 * abs(float(a))) for a, b in zip(full, half)]
        J = {}
        for fid in ids:
            jf = _j_values(w, fid, r, kmax)
            jh = _j_values(w, fid, r, kmax, half=True)
            J[fid] = [GreenValue(float(a), abs(float(a) - float(b)) + 1e-14 * abs(float(a))) for a, b in zip(jf, jh)]
        return Functionals(float(r), I, J)
    ladder = boundary_ladder(R)
    Iv = np.array([_i_values(w, float(x), kmax) for x in ladder])
    I = [classify_samples(list(zip(ladder, Iv[:, k])), R)[0] for k in range(kmax)]
    J = {}
    for fid in ids:
        Jv = np.array([_j_values(w, fid, float(x), kmax) for x in ladder])
        J[fid] = [classify_samples(list(zip(ladder, Jv[:, k])), R)[0] for k in range(kmax)]
    return Functionals(float(R), I, J)


def _boundedness(samples, R: float):
    """``(ratio, fit)``: best unbounded residual over bounded residual."""
    fit = singularity_model_fit(samples, R, models=("bounded", "inv_sqrt", "log", "power"))
    unb = min(fit.fits[k].residual for k in ("inv_sqrt", "log", "power"))
    tiny = 1e-300
    return (unb + tiny) / (fit.fits["bounded"].residual + tiny), fit


def plateau_check(w, fid: int, k: int = 2, ladder: np.ndarray | None = None, contact_tol: float = 1e-9) -> dict:
    """Is ``J^(k)_p(r)`` bounded as ``r`` increases to the radius?

    When ``s_p(R) < 1`` the kernel Green function is analytic at the radius
    and ``J^(k)_p(R)`` is evaluated there directly; the ladder fit is kept as
    a diagnostic only, since close to contact its pre-asymptotic growth can
    outlast the ladder. Factors in contact are decided by the ladder fit.
    """
    mdl = _model(w)
    R = mdl.radius().R
    ladder = boundary_ladder(R) if ladder is None else ladder
    vals = [float(_j_values(w, fid, float(x), k)[k - 1]) for x in ladder]
    ratio, fit = _boundedness(list(zip(ladder, vals)), R)
    gap = 1.0 - float(mdl.solve(R).s[w.index_of(fid)])
    out = {
        "factor": fid,
        "k": k,
        "ratio": float(ratio),
        "plateau": float(fit.fits["bounded"].amplitude),
        "last": vals[-1],
        "gap": gap,
    }
    if gap > contact_tol:
        direct = float(_j_values(w, fid, R, k)[k - 1])
        out.update(route="direct", value=direct, bounded=bool(math.isfinite(direct)))
    else:
        out.update(route="ladder", value=out["plateau"], bounded=bool(ratio >= 3.0))
    return out


_UNRESOLVED = (
    "inconclusive_I1_ladder",
    "contact_with_divergent_ladder",
    "J2_plateau_unresolved_near_critical",
    "branch_point_with_degenerate_margin",
    "precision_escalation_requested",
)


def _escalated_ladders() -> list:
    kmin, kmax, pts = config.get_ladder()
    return [(kmin, kmax, pts), (kmin + 1, kmax + 2, pts + 4), (kmin + 2, kmax + 4, pts + 8)]


def classify_walk(
    w,
    exponent_N: int | None = None,
    cross_check: bool = True,
    raise_inconclusive: bool = True,
    exponent_window: tuple[float, float] = (0.25, 1.0),
) -> Report:
    """Radius, degeneracy margins, verdict, rank ``d`` and predicted exponent.

    When the boundary ladder cannot settle the verdict (near-critical walks,
    very lazy factors whose asymptotic regime starts close to the radius)
    the margins and boundary fits are redone on deeper ladders, at most two
    extra times. The ladder finally used is recorded in the diagnostics.
    """
    diagnostics: dict = {}
    flags: list = []
    if cross_check:
        try:
            info = locate_radius(w)
            diagnostics["radius_cross_check"] = {
                "status": "pass",
                "coefficient_R": info.coefficient_R,
                "uncertainty": info.coefficient_uncertainty,
            }
        except CrossCheckFailed as exc:
            info = locate_radius(w, cross_check=False)
            diagnostics["radius_cross_check"] = {"status": "fail", "message": str(exc)}
            flags.append("radius_cross_check_failed")
    else:
        info = locate_radius(w, cross_check=False)

    ladders = _escalated_ladders()
    for n, lad in enumerate(ladders):
        with config.ladder(*lad):
            report, ratio = _classify_at(w, info, list(flags), dict(diagnostics), exponent_N, exponent_window)
        report.diagnostics["ladder"] = {"kmin": lad[0], "kmax": lad[1], "points": lad[2], "escalations": n}
        if not any(f in report.flags for f in _UNRESOLVED):
            break
    if "inconclusive_I1_ladder" in report.flags and raise_inconclusive:
        raise InconclusiveClassification(
            f"bounded and divergent fits of I^(1) are within 3x (ratio {ratio:.3g})", report
        )
    return report


def _classify_at(w, info, flags: list, diagnostics: dict, exponent_N, exponent_window):
    R = info.R

    margins: dict = {}
    degenerate: list[DegeneracyResult] = []
    near = False
    for f in w.factors:
        res = degeneracy_test(w, f.id)
        margins[f.id] = {
            "margin": res.margin,
            "uncertainty": res.uncertainty,
            "degenerate": res.degenerate,
            "near_critical": res.near_critical,
            "rank": res.rank,
        }
        if res.near_critical:
            near = True
            flags.append(f"near_critical_margin:{f.id}")
        if res.degenerate:
            if res.flagged:
                near = True
                flags.append(f"rank_floor:{f.id}")
                flags.append("precision_escalation_requested")
            else:
                degenerate.append(res)

    ladder = boundary_ladder(R)
    i1 = [float(_i_values(w, float(x), 1)[0]) for x in ladder]
    ratio, fit = _boundedness(list(zip(ladder, i1)), R)
    diagnostics["I1_ladder"] = {"bounded_ratio": float(ratio), "plateau": float(fit.fits["bounded"].amplitude), "last": i1[-1]}
    inconclusive = 1.0 / 3.0 < ratio < 3.0
    verdict = VERDICT_CONVERGENT if ratio >= 1.0 else VERDICT_DIVERGENT

    d = min(r.rank for r in degenerate) if degenerate else None
    if verdict == VERDICT_CONVERGENT and d is None:
        near = True
        flags.append("convergent_without_degenerate_factor")
    if info.boundary == "degeneracy_contact" and verdict == VERDICT_DIVERGENT and d is not None and d >= 5:
        near = True
        flags.append("contact_with_divergent_ladder")
    if info.boundary == "branch_point" and degenerate:
        near = True
        flags.append("branch_point_with_degenerate_margin")
    kappa_star = d / 2.0 if (verdict == VERDICT_CONVERGENT and d is not None) else 1.5

    report = Report(
        R=R,
        boundary_type=info.boundary,
        contact=info.contact,
        radius_accuracy=float(info.accuracy),
        margins=margins,
        d=d,
        verdict=verdict,
        kappa_star=kappa_star,
        near_critical=near or inconclusive,
        flags=flags,
        diagnostics=diagnostics,
    )

    # singularity model of G^{(j)}, j = ceil(2 kappa* / 2) - 1
    d_eff = int(round(2 * kappa_star))
    j = max(1, math.ceil(d_eff / 2) - 1)
    try:
        gj = [float(green_jet(w, float(x), j)[j]) for x in ladder]
        sfit = singularity_model_fit(list(zip(ladder, gj)), R, models=("inv_sqrt", "log"))
        report.singularity = {
            "j": j,
            "model": sfit.best,
            "amplitude": sfit.amplitude,
            "advantage": sfit.advantage,
            "expected": "inv_sqrt" if d_eff % 2 else "log",
        }
    except NonMonotoneSamples as exc:  # pragma: no cover - ladder is fixed
        report.singularity = {"j": j, "error": str(exc)}

    if verdict == VERDICT_DIVERGENT:
        checks = [plateau_check(w, f.id, 2, ladder) for f in w.factors]
        report.diagnostics["J2_plateau"] = checks
        if not all(c["bounded"] for c in checks):
            # near contact the ladder cannot separate a large plateau from growth
            if report.near_critical:
                report.flags.append("J2_plateau_unresolved_near_critical")
            else:
                report.flags.append("contradiction:divergent_with_unbounded_J2")

    if exponent_N is not None:
        chk = verify_exponent(w, exponent_N, report=report, window=exponent_window)
        report.kappa = chk.kappa
        report.kappa_uncertainty = chk.uncertainty
        report.diagnostics["exponent"] = chk.to_json()

    if inconclusive:
        report.flags.append("inconclusive_I1_ladder")
    return report, ratio


def verify_exponent(w, N: int, report: Report | None = None, window: tuple[float, float] = (0.25, 1.0)) -> ExponentCheck:
    """Empirical coefficient exponent against the predicted one.

    Also fits ``G^{(j)}`` near the radius, ``j = ceil(2 kappa*/2) - 1``,
    against the inverse-square-root and logarithmic models; odd ``2 kappa*``
    predicts the former and even the latter.
    """
    if report is None:
        report = classify_walk(w, cross_check=False, raise_inconclusive=False)
    g = green_series(w, N)
    fit = coefficient_exponent_fit(g, g.rescale, window=window)
    ks = report.kappa_star
    d_eff = int(round(2 * ks))
    j = max(1, math.ceil(d_eff / 2) - 1)
    R = report.R
    ladder = boundary_ladder(R)
    gj = [float(green_jet(w, float(x), j)[j]) for x in ladder]
    sfit = singularity_model_fit(list(zip(ladder, gj)), R, models=("inv_sqrt", "log"))
    expected = "inv_sqrt" if d_eff % 2 else "log"
    agreement = abs(fit.kappa - ks)
    return ExponentCheck(
        kappa=fit.kappa,
        uncertainty=fit.uncertainty,
        kappa_star=ks,
        agreement=agreement,
        within=bool(agreement <= max(0.05, 3 * fit.uncertainty)),
        j=j,
        model=sfit.best,
        expected_model=expected,
        model_advantage=float(sfit.advantage),
        model_ok=bool(sfit.best == expected),
        N=int(N),
    )


def default_monitor_grid(R: float) -> np.ndarray:
    inner = R * np.array([0.1, 0.3, 0.5, 0.7, 0.8, 0.9])
    outer = R * (1.0 - np.logspace(-1.3, -3, 12))
    return np.unique(np.concatenate([inner, outer]))


def ij_ratio_monitor(w, r_grid: Sequence[float] | None = None, k: int = 2, tol: float = 1e-9) -> MonitorResult:
    """``I^(k)/J^(k)`` and ``I^(1)^4 J^(3) / I^(3)`` along an r-grid.

    ``J^(k) = sum_p J^(k)_p``. Flags per-factor violations of
    ``J^(k)_p <= I^(k)`` (checked for every order up to 3) and a growing trend
    of the second ratio. The trend is read off the deepest decade of a tail
    ladder ``R (1 - 10^-j)``, ``j`` in [3, 6], rather than the grid itself:
    for non-degenerate walks the ratio rises through ``R - r ~ 1e-3`` before
    it decays like ``sqrt(R - r)``, so a grid ending at ``0.999 R`` alone
    cannot tell a transient from divergence.
    """
    R = _model(w).radius().R
    grid = default_monitor_grid(R) if r_grid is None else np.asarray(r_grid, dtype=float)
    ids = [f.id for f in w.factors]

    def evaluate(rs):
        I = np.array([_i_values(w, float(r), 3) for r in rs])
        J = {fid: np.array([_j_values(w, fid, float(r), 3) for r in rs]) for fid in ids}
        return I, J

    I, J = evaluate(grid)
    Jsum = sum(J.values())
    violations = []
    for fid in ids:
        for kk in range(3):
            bad = J[fid][:, kk] > I[:, kk] * (1.0 + tol) + tol
            for i in np.nonzero(bad)[0]:
                violations.append({"factor": fid, "k": kk + 1, "r": float(grid[i])})
    ratio = I[:, k - 1] / Jsum[:, k - 1]
    bound = I[:, 0] ** 4 * Jsum[:, 2] / I[:, 2]
    h = R - grid
    last = h <= 10.0 * h.min()
    spread = 0.0
    if np.count_nonzero(last) >= 3:
        rl = ratio[last]
        spread = float((rl.max() - rl.min()) / rl.mean())

    tail_h = 10.0 ** -np.arange(3.0, 6.01, 0.5)
    It, Jt = evaluate(R * (1.0 - tail_h))
    Jt_sum = sum(Jt.values())
    bound_tail = It[:, 0] ** 4 * Jt_sum[:, 2] / It[:, 2]
    deep = tail_h <= 1e-5 * (1.0 + 1e-9)
    slope = np.polyfit(np.log(tail_h[deep]), np.log(bound_tail[deep]), 1)[0]
    unbounded = bool(slope < -0.1)
    constant = float(max(np.max(bound), np.max(bound_tail)))
    return MonitorResult(grid, k, I[:, k - 1], {fid: J[fid][:, k - 1] for fid in ids}, ratio, bound,
                         constant, violations, unbounded, spread)


__all__ = [
    "ExponentCheck",
    "Functionals",
    "MonitorResult",
    "Report",
    "VERDICT_CONVERGENT",
    "VERDICT_DIVERGENT",
    "cascade",
    "classify_walk",
    "compute_functionals",
    "default_monitor_grid",
    "ij_ratio_monitor",
    "plateau_check",
    "verify_exponent",
]
