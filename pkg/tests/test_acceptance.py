"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) and
then asserts, so a failing criterion also fails the suite.
"""
from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest

from greenlab.classify import classify_walk, ij_ratio_monitor
from greenlab.cli import run_scenario
from greenlab.excursions import green_series, green_value, lazified, locate_radius
from greenlab.groups import brute_force_return_sequence
from greenlab.scenarios import random_admissible_walk, random_oracle_walk, shipped_scenarios
from greenlab.strip import (
    affine_family,
    growth_estimate,
    minimize_lambda,
    random_strip_kernel,
    rho_curve,
    scalar_srw,
    strip_local_limit_check,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
DIVERGENT = "divergent_spectrally_positive_recurrent"


def test_c1_free_group_radius(criterion):
    t0 = time.perf_counter()
    R = locate_radius(shipped_scenarios()["free_group"]).R
    dt = time.perf_counter() - t0
    err = abs(R - 2 / math.sqrt(3))
    assert criterion(1, err < 1e-8 and dt < 10, f"|R - 2/sqrt3| = {err:.2e}, {dt:.1f} s")


def test_c2_oracle_equivalence(criterion):
    rng = np.random.default_rng(12345)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(5):
        w = random_oracle_walk(rng)
        b = brute_force_return_sequence(w, 12)
        g = green_series(w, 256).raw()[:13]
        nz = b > 0
        worst = max(worst, float(np.max(np.abs(g[nz] - b[nz]) / b[nz])), float(np.max(np.abs(g[~nz]), initial=0.0)))
    dt = time.perf_counter() - t0
    assert criterion(2, worst < 1e-9 and dt < 120, f"max relative error {worst:.2e} over n <= 12, {dt:.1f} s")


def test_c3_nondegenerate_exponent(criterion):
    t0 = time.perf_counter()
    rep = classify_walk(shipped_scenarios()["free_group"], exponent_N=4096)
    dt = time.perf_counter() - t0
    ok = 1.45 <= rep.kappa <= 1.55 and rep.kappa_star == 1.5 and dt < 120
    assert criterion(3, ok, f"kappa = {rep.kappa:.4f} (predicted {rep.kappa_star}), {dt:.1f} s")


def test_c4_two_route_spectral_radius(criterion):
    rng = np.random.default_rng(2718)
    worst_rho, worst_dp = 0.0, 0.0
    for _ in range(10):
        d, N = int(rng.integers(1, 3)), int(rng.integers(1, 4))
        sym = bool(rng.random() < 0.5)
        K = random_strip_kernel(rng, d, N, symmetric=sym)
        _, rho = minimize_lambda(K)
        g, _ = growth_estimate(K)
        worst_rho = max(worst_rho, abs(rho - g))
        K1 = random_strip_kernel(rng, d, N, symmetric=sym)
        fam, dfam = affine_family(K.scaled(0.5), K1.scaled(0.3))
        pts = rho_curve(fam, [0.5, 1.0, 1.5], dfam, tol=math.inf)
        worst_dp = max(worst_dp, max(abs(p.rho_prime_eigen - p.rho_prime_fd) for p in pts))
    ok = worst_rho < 1e-3 and worst_dp < 1e-6
    assert criterion(4, ok, f"max |rho - growth| = {worst_rho:.2e}, max |rho' eigen - fd| = {worst_dp:.2e}")


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    """Run the shipped sweep and exponent scenarios through the front end, uncached."""
    out = tmp_path_factory.mktemp("sweeps")
    t0 = time.perf_counter()
    reports = {}
    for name in ("z5_pair_sweep", "z5_pair_lazy_sweep", "z5_pair_exponent", "z6_pair_exponent",
                 "free_group_sweep", "sticky_line_sweep"):
        reports[name] = run_scenario(SCENARIOS / f"{name}.json", out=out / name, use_cache=False, threads=4)
    reports["_seconds"] = time.perf_counter() - t0
    return reports


def test_c5_degenerate_convergent_reproduction(criterion, sweeps):
    rows = [p for n in ("z5_pair_sweep", "z5_pair_lazy_sweep") for p in sweeps[n]["tasks"]["sweep"]["points"]]
    degenerate = [p for p in rows if p["status"] == "ok" and p["d"] is not None]
    convergent = [p for p in degenerate if p["verdict"] == "convergent"]
    top = max(p["param"] for p in rows)
    e5 = sweeps["z5_pair_exponent"]["tasks"]["exponent"]
    e6 = sweeps["z6_pair_exponent"]["tasks"]["exponent"]
    ok = (
        bool(convergent)
        and top >= 0.999
        and 2.35 <= e5["kappa"] <= 2.65
        and e5["model"] == "inv_sqrt"
        and e5["model_advantage"] >= 10
        and e6["model"] == "log"
        and sweeps["_seconds"] < 45 * 60
    )
    detail = (f"{len(degenerate)}/{len(rows)} sweep points degenerate, {len(convergent)} convergent; "
              f"rank 5: kappa = {e5['kappa']:.4f}, G'' {e5['model']} x{e5['model_advantage']:.0f}; "
              f"rank 6: {e6['model']}; {sweeps['_seconds']:.0f} s")
    assert criterion(5, ok, detail)


def test_c6_divergent_points_have_bounded_plateaus(criterion, sweeps):
    names = ("z5_pair_sweep", "z5_pair_lazy_sweep", "free_group_sweep", "sticky_line_sweep")
    rows = [p for n in names for p in sweeps[n]["tasks"]["sweep"]["points"]]
    divergent = [p for p in rows if p.get("verdict") == DIVERGENT]
    bad = [p["param"] for p in divergent if p["J2_plateau_bounded"] is not True]
    errors = [p for p in rows if p["status"] == "error"]
    ok = bool(divergent) and not bad and not errors
    assert criterion(6, ok, f"{len(divergent)} divergent points, {len(bad)} without a bounded J2 plateau, "
                            f"{len(errors)} failed points")


def test_c7_lazification_identity(criterion):
    sc = shipped_scenarios()
    worst = 0.0
    for name in ("free_group", "z5_pair_0.9", "z5_sticky_line_0.9"):
        w = sc[name]
        R = locate_radius(w, cross_check=False).R
        for a in (0.1, 0.3):
            # left side: coefficient recursion for the lazy walk; right side: fixed point of the original
            S = green_series(lazified(w, a), 1024)
            Rl = R / (1 - a + a * R)
            for t in np.linspace(0.05, 0.9, 12) * Rl:
                rhs = green_value(w, (1 - a) * t / (1 - a * t)) / (1 - a * t)
                worst = max(worst, abs(S.evaluate(t) - rhs) / abs(rhs))
    assert criterion(7, worst < 1e-12, f"max relative error {worst:.2e}")


def test_c8_strip_local_limit(criterion):
    rng = np.random.default_rng(8)
    kernels = [("scalar SRW", scalar_srw())] + [(f"random N={N}", random_strip_kernel(rng, 1, N)) for N in (2, 3)]
    parts, ok = [], True
    for label, K in kernels:
        tr = strip_local_limit_check(K, n_max=2048)
        s = float(tr.sup[tr.n <= 2000][-1])
        ok &= s < 0.05 and tr.monotone_dyadic
        parts.append(f"{label}: s_1024 = {s:.4f}{'' if tr.monotone_dyadic else ' (not monotone)'}")
    assert criterion(8, ok, "; ".join(parts))


def test_c9_inequality_monitors(criterion):
    bad = []
    for name, w in shipped_scenarios().items():
        R = locate_radius(w, cross_check=False).R
        grid = R * np.concatenate([[0.1, 0.3, 0.5, 0.7, 0.9], 1 - np.logspace(-1.3, -3, 12)])
        m = ij_ratio_monitor(w, np.unique(grid))
        if not m.ok:
            bad.append(name)
    assert criterion(9, not bad, f"{len(shipped_scenarios())} scenarios, failing: {bad or 'none'}")


def test_c10_rank_floor(criterion):
    rng = np.random.default_rng(2024)
    invalid, unflagged, near = [], [], 0
    t0 = time.perf_counter()
    for i in range(20):
        w = random_admissible_walk(rng)
        rep = classify_walk(w, raise_inconclusive=False)
        if rep.d is not None and rep.d < 5:
            invalid.append(i)
        for m in rep.margins.values():
            low_rank_degenerate = m["degenerate"] and m["rank"] < 5
            if (low_rank_degenerate or m["near_critical"]) and not rep.near_critical:
                unflagged.append(i)
        near += bool(rep.near_critical)
    dt = time.perf_counter() - t0
    ok = not invalid and not unflagged
    assert criterion(10, ok, f"20 walks, {len(invalid)} with d < 5, {len(unflagged)} unflagged near-critical, "
                             f"{near} reported near-critical, {dt:.0f} s")
