"""Process-wide numerical settings.

Only the arithmetic mode lives here. It is held in a context variable so
concurrent evaluations can use different modes without interfering.
"""
from __future__ import annotations

import contextlib
import contextvars

PRECISION_MODES = ("double", "dd")

_precision: contextvars.ContextVar[str] = contextvars.ContextVar("greenlab_precision", default="double")


def get_precision() -> str:
    return _precision.get()


def set_precision(mode: str) -> None:
    if mode not in PRECISION_MODES:
        raise ValueError(f"unknown precision mode {mode!r}; expected one of {PRECISION_MODES}")
    _precision.set(mode)


@contextlib.contextmanager
def precision(mode: str):
    """Temporarily switch the arithmetic mode used by series products."""
    if mode not in PRECISION_MODES:
        raise ValueError(f"unknown precision mode {mode!r}; expected one of {PRECISION_MODES}")
    token = _precision.set(mode)
    try:
        yield
    finally:
        _precision.reset(token)


DEFAULT_LADDER = (2.0, 6.0, 17)

_ladder: contextvars.ContextVar[tuple] = contextvars.ContextVar("greenlab_ladder", default=DEFAULT_LADDER)


def get_ladder() -> tuple:
    """``(kmin, kmax, points)`` of the boundary ladder ``R (1 - 10^-k)``."""
    return _ladder.get()


@contextlib.contextmanager
def ladder(kmin: float, kmax: float, points: int):
    if not (0 < kmin < kmax) or points < 12:
        raise ValueError("ladder needs 0 < kmin < kmax and at least 12 points")
    token = _ladder.set((float(kmin), float(kmax), int(points)))
    try:
        yield
    finally:
        _ladder.reset(token)
