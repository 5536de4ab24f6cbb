"""Exception types and structured non-failure results."""
from __future__ import annotations

from dataclasses import dataclass


class GreenlabError(Exception):
    """Base class for all library errors."""


# series engine
class IncompatibleRescale(GreenlabError):
    pass


class NonInvertibleConstantTerm(GreenlabError):
    pass


class NonNilpotentInner(GreenlabError):
    pass


class InsufficientCoefficients(GreenlabError):
    pass


class OscillatoryRatios(GreenlabError):
    pass


class RadiusDriftDetected(GreenlabError):
    pass


class NonMonotoneSamples(GreenlabError):
    pass


# groups
class UnknownFactorId(GreenlabError):
    pass


class InvalidWalk(GreenlabError):
    pass


class BudgetExceeded(GreenlabError):
    """Raised when a brute-force support outgrows its element budget.

    ``partial`` holds whatever was computed before the cap was hit.
    """

    def __init__(self, message: str, cap: int, partial=None):
        super().__init__(message)
        self.cap = cap
        self.partial = partial


class RadiusUnknown(GreenlabError):
    pass


class TailTooLoose(GreenlabError):
    pass


# lattice
class UnsupportedMeasure(GreenlabError):
    pass


class TailModelUnavailable(GreenlabError):
    pass


# excursions
class NoFixedPoint(GreenlabError):
    pass


class CrossCheckFailed(GreenlabError):
    pass


class ModelRequired(GreenlabError):
    pass


class ValidationFailed(GreenlabError):
    pass


# strip
class Reducible(GreenlabError):
    pass


class RouteMismatch(GreenlabError):
    pass


class UnboundedBelowDirection(GreenlabError):
    pass


# classifier
class InconclusiveClassification(GreenlabError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


# cli
class ConfigInvalid(GreenlabError):
    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class CacheCorrupt(GreenlabError):
    pass


@dataclass(frozen=True)
class Divergent:
    """A quantity whose defining series diverges at the evaluation point.

    ``model`` is one of ``inv_sqrt``, ``log``, ``power``; ``exponent`` is set
    for ``power`` models, f ~ amplitude * (R - r)^(-exponent).
    """

    model: str
    amplitude: float = float("nan")
    exponent: float | None = None

    def to_json(self) -> dict:
        out = {"divergent": True, "model": self.model, "amplitude": self.amplitude}
        if self.exponent is not None:
            out["exponent"] = self.exponent
        return out
