"""Numerical laboratory for Green functions of random walks on free products.

Submodules are imported on first attribute access so that light entry points
(scenario validation, cache hits in the command line tool) do not pay for
numba and scipy start-up.
"""
from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "backend_name": "._accel",
    "Divergent": ".errors",
    "GreenlabError": ".errors",
    "Series": ".series",
    "coefficient_exponent_fit": ".series",
    "compose_many": ".series",
    "radius_estimate": ".series",
    "series_ring_ops": ".series",
    "singularity_model_fit": ".series",
    "FactorSpec": ".groups",
    "WalkSpec": ".groups",
    "brute_force_return_sequence": ".groups",
    "brute_force_first_return": ".groups",
    "normalize_word": ".groups",
    "exact_returns": ".lattice",
    "lattice_green_eval": ".lattice",
    "local_clt_constants": ".lattice",
    "tilt_mgf": ".lattice",
    "locate_radius": ".excursions",
    "solve_excursions": ".excursions",
    "green_series": ".excursions",
    "green_value": ".excursions",
    "green_derivatives_at": ".excursions",
    "first_return_kernel": ".excursions",
    "ancona_probe": ".excursions",
    "lazified": ".excursions",
    "StripKernel": ".strip",
    "minimize_lambda": ".strip",
    "rho_curve": ".strip",
    "degeneracy_test": ".strip",
    "strip_asymptotics": ".strip",
    "strip_local_limit_check": ".strip",
    "classify_walk": ".classify",
    "compute_functionals": ".classify",
    "ij_ratio_monitor": ".classify",
    "verify_exponent": ".classify",
    "run_scenario": ".cli",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name: str):
    mod = _EXPORTS.get(name)
    if mod is None:
        raise AttributeError(f"module 'greenlab' has no attribute {name!r}")
    value = getattr(importlib.import_module(mod, __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
