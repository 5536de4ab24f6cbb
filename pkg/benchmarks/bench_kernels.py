"""Time the compiled kernels against their numpy fallbacks.

Both variants are imported directly from ``greenlab.kernels`` so one process
measures both, whatever GREENLAB_DISABLE_NUMBA says. Each pair is also
checked for agreement before timing.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 1024 4096]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from greenlab import kernels
from greenlab._accel import NUMBA_IMPORTABLE


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n, rng):
    a = rng.random(n + 1)
    b = rng.random(n + 1)
    yield "conv_trunc", (a, b, n)
    yield "conv_trunc_comp", (a, b, n)
    offsets = np.array([-1, 0, 1], dtype=np.int64)
    weights = np.array([0.3, 0.4, 0.3])
    yield "walk1d_returns", (offsets, weights, n, 0)
    nstate, size = 3, 2 * n + 1
    cur = rng.random((nstate, size))
    src = np.array([0, 1, 2, 0, 1, 2], dtype=np.int64)
    dst = np.array([1, 2, 0, 0, 1, 2], dtype=np.int64)
    shift = np.array([1, -1, 0, 2, -2, 1], dtype=np.int64)
    w = np.full(6, 1.0 / 6)
    yield "strip_propagate", (cur, src, dst, shift, w)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096])
    args = ap.parse_args(argv)
    if not NUMBA_IMPORTABLE:
        print("numba is not importable; only the numpy path can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'n':>7}{'numba [s]':>13}{'numpy [s]':>13}{'speedup':>10}{'max diff':>12}")
    for n in args.sizes:
        for name, call in cases(n, rng):
            f_np = getattr(kernels, f"_{name}_np")
            f_nb = getattr(kernels, f"_{name}_nb")
            ref = np.asarray(f_np(*call))
            if NUMBA_IMPORTABLE:
                got = np.asarray(f_nb(*call))  # first call compiles
                diff = float(np.max(np.abs(got - ref)))
                t_nb = best_of(lambda: f_nb(*call), args.repeat)
            else:
                diff, t_nb = float("nan"), float("nan")
            t_np = best_of(lambda: f_np(*call), args.repeat)
            print(f"{name:<18}{n:>7}{t_nb:>13.3e}{t_np:>13.3e}{t_np / t_nb:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
