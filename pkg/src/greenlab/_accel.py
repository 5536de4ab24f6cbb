"""Backend selection for the compiled kernels.

Set ``GREENLAB_DISABLE_NUMBA=1`` to force the pure-numpy code paths even when
numba is importable. The choice is made once, at import time.
"""
from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

_FLAG = "GREENLAB_DISABLE_NUMBA"


def _flag_set() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    import numba  # noqa: F401
    from numba import njit

    NUMBA_IMPORTABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_IMPORTABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = NUMBA_IMPORTABLE and not _flag_set()

if NUMBA_IMPORTABLE and not USE_NUMBA:
    log.info("numba disabled by %s; using numpy kernels", _FLAG)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
