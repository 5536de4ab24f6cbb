from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from greenlab import kernels
from greenlab._accel import NUMBA_IMPORTABLE, backend_name

needs_numba = pytest.mark.skipif(not NUMBA_IMPORTABLE, reason="numba not importable")


@needs_numba
def test_conv_backends_agree():
    rng = np.random.default_rng(0)
    a, b = rng.random(300), rng.random(300)
    ref = np.convolve(a, b)[:300]
    assert np.allclose(kernels._conv_trunc_nb(a, b, 300), ref, rtol=1e-13)
    assert np.allclose(kernels._conv_trunc_np(a, b, 300), ref, rtol=1e-13)
    assert np.array_equal(kernels._conv_trunc_comp_nb(a, b, 300), kernels._conv_trunc_comp_np(a, b, 300))


@needs_numba
def test_walk_and_strip_backends_agree():
    offs = np.array([-2, -1, 0, 1, 2], dtype=np.int64)
    w = np.array([0.1, 0.2, 0.4, 0.2, 0.1])
    assert np.allclose(kernels._walk1d_returns_nb(offs, w, 300, 0), kernels._walk1d_returns_np(offs, w, 300, 0), rtol=1e-13, atol=1e-300)
    rng = np.random.default_rng(1)
    cur = rng.random((2, 41))
    src = np.array([0, 1, 0], dtype=np.int64)
    dst = np.array([1, 0, 0], dtype=np.int64)
    sh = np.array([1, -1, 0], dtype=np.int64)
    ww = np.array([0.3, 0.5, 0.2])
    assert np.allclose(kernels._strip_propagate_nb(cur, src, dst, sh, ww), kernels._strip_propagate_np(cur, src, dst, sh, ww))


def test_compensated_product_is_exact_on_cancellation():
    a = np.array([1e16, 1.0, -1e16])
    b = np.array([1.0, 1.0, 1.0])
    out = kernels._conv_trunc_comp_np(a, b, 3)
    assert out[2] == 1.0


def test_env_flag_selects_numpy():
    code = "from greenlab._accel import backend_name; print(backend_name())"
    env = dict(os.environ, GREENLAB_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    assert backend_name() in ("numba", "numpy")
