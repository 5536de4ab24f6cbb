"""Hot inner loops, each with a numba and a numpy implementation.

The public names (``conv_trunc``, ``conv_trunc_comp``, ``walk1d_returns``,
``strip_propagate``) are bound to one backend at import time, see
:mod:`greenlab._accel`. Both variants are always importable under their
``_nb`` / ``_np`` suffixed names so they can be compared directly.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

_SPLIT = 134217729.0  # 2**27 + 1, Dekker splitter for binary64


# -- truncated Cauchy product -------------------------------------------------

@njit(cache=True)
def _conv_trunc_nb(a, b, n):
    out = np.zeros(n)
    na = min(a.shape[0], n)
    nb = min(b.shape[0], n)
    for i in range(na):
        ai = a[i]
        if ai == 0.0:
            continue
        top = min(nb, n - i)
        for j in range(top):
            out[i + j] += ai * b[j]
    return out


def _conv_trunc_np(a, b, n):
    a = np.asarray(a, dtype=float)[:n]
    b = np.asarray(b, dtype=float)[:n]
    out = np.zeros(n)
    if a.size == 0 or b.size == 0:
        return out
    c = np.convolve(a, b)[:n]
    out[: c.size] = c
    return out


# -- compensated (Dot2-style) Cauchy product ----------------------------------

@njit(cache=True)
def _two_prod(x, y):
    p = x * y
    t = _SPLIT * x
    xh = t - (t - x)
    xl = x - xh
    t = _SPLIT * y
    yh = t - (t - y)
    yl = y - yh
    e = xl * yl - (((p - xh * yh) - xl * yh) - xh * yl)
    return p, e


@njit(cache=True)
def _conv_trunc_comp_nb(a, b, n):
    s = np.zeros(n)
    c = np.zeros(n)
    na = min(a.shape[0], n)
    nb = min(b.shape[0], n)
    for i in range(na):
        ai = a[i]
        top = min(nb, n - i)
        for j in range(top):
            p, e = _two_prod(ai, b[j])
            k = i + j
            x = s[k]
            t = x + p
            z = t - x
            c[k] += ((x - (t - z)) + (p - z)) + e
            s[k] = t
    return s + c


def _two_prod_np(x, y):
    p = x * y
    t = _SPLIT * x
    xh = t - (t - x)
    xl = x - xh
    t = _SPLIT * y
    yh = t - (t - y)
    yl = y - yh
    e = xl * yl - (((p - xh * yh) - xl * yh) - xh * yl)
    return p, e


def _conv_trunc_comp_np(a, b, n):
    a = np.asarray(a, dtype=float)[:n]
    b = np.asarray(b, dtype=float)[:n]
    s = np.zeros(n)
    c = np.zeros(n)
    for i in range(a.size):
        top = min(b.size, n - i)
        if top <= 0:
            break
        p, e = _two_prod_np(a[i], b[:top])
        x = s[i:i + top]
        t = x + p
        z = t - x
        c[i:i + top] += ((x - (t - z)) + (p - z)) + e
        s[i:i + top] = t
    return s + c


# -- one-dimensional walk, return probabilities -------------------------------

@njit(cache=True)
def _walk1d_returns_nb(offsets, weights, N, target):
    smax = 0
    for o in offsets:
        smax = max(smax, abs(o))
    half = N * smax + abs(target)
    size = 2 * half + 1
    cur = np.zeros(size)
    nxt = np.zeros(size)
    cur[half] = 1.0
    out = np.zeros(N + 1)
    out[0] = 1.0 if target == 0 else 0.0
    lo = half
    hi = half
    for n in range(1, N + 1):
        nlo = lo - smax
        nhi = hi + smax
        for x in range(nlo, nhi + 1):
            nxt[x] = 0.0
        for k in range(offsets.shape[0]):
            o = offsets[k]
            w = weights[k]
            for x in range(lo, hi + 1):
                nxt[x + o] += w * cur[x]
        cur, nxt = nxt, cur
        lo = nlo
        hi = nhi
        out[n] = cur[half + target]
    return out


def _walk1d_returns_np(offsets, weights, N, target):
    offsets = np.asarray(offsets, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    smax = int(np.abs(offsets).max()) if offsets.size else 0
    law = np.zeros(2 * smax + 1)
    np.add.at(law, offsets + smax, weights)
    half = N * smax + abs(int(target))
    dist = np.zeros(2 * half + 1)
    dist[half] = 1.0
    out = np.zeros(N + 1)
    out[0] = 1.0 if target == 0 else 0.0
    lo = hi = half
    for n in range(1, N + 1):
        block = np.convolve(dist[lo:hi + 1], law)
        lo -= smax
        hi += smax
        dist[lo:hi + 1] = block
        out[n] = dist[half + target]
    return out


# -- strip propagation on a flattened padded grid -----------------------------

@njit(cache=True)
def _strip_propagate_nb(cur, src, dst, shift, w):
    nstate, size = cur.shape
    out = np.zeros((nstate, size))
    for e in range(src.shape[0]):
        j = src[e]
        jp = dst[e]
        s = shift[e]
        we = w[e]
        lo = max(0, -s)
        hi = min(size, size - s)
        for x in range(lo, hi):
            v = cur[j, x]
            if v != 0.0:
                out[jp, x + s] += we * v
    return out


def _strip_propagate_np(cur, src, dst, shift, w):
    nstate, size = cur.shape
    out = np.zeros((nstate, size))
    for j, jp, s, we in zip(src, dst, shift, w):
        lo = max(0, -s)
        hi = min(size, size - s)
        out[jp, lo + s:hi + s] += we * cur[j, lo:hi]
    return out


if USE_NUMBA:
    conv_trunc = _conv_trunc_nb
    conv_trunc_comp = _conv_trunc_comp_nb
    walk1d_returns = _walk1d_returns_nb
    strip_propagate = _strip_propagate_nb
else:
    conv_trunc = _conv_trunc_np
    conv_trunc_comp = _conv_trunc_comp_np
    walk1d_returns = _walk1d_returns_np
    strip_propagate = _strip_propagate_np
