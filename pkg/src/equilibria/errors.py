"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations

from typing import Any


class EquilibriaError(Exception):
    """Base class for all errors raised by this package."""


class InvalidProbabilities(EquilibriaError):
    pass


class ArbitrageDetected(EquilibriaError):
    pass


class InfeasiblePolytope(EquilibriaError):
    pass


class EmptyIntersection(EquilibriaError):
    pass


class DomainViolation(EquilibriaError):
    pass


class NonConvergence(EquilibriaError):
    """An iterative solver stopped without meeting its tolerance.

    ``last_iterate`` carries the final point so callers can inspect it.
    """

    def __init__(self, message: str, last_iterate: Any = None):
        super().__init__(message)
        self.last_iterate = last_iterate


class PriceOutsideRange(EquilibriaError):
    pass


class AssumptionViolated(EquilibriaError):
    """A standing assumption of the equilibrium theory fails.

    ``assumption`` is a short label such as ``"non-redundancy"`` and
    ``witness`` holds whatever object demonstrates the failure.
    """

    def __init__(self, assumption: str, message: str, witness: Any = None):
        super().__init__(message)
        self.assumption = assumption
        self.witness = witness


class GridTooCoarse(EquilibriaError):
    pass


class MinimumOnBoundary(EquilibriaError):
    pass


class ParseError(EquilibriaError):
    pass


class ValidationError(EquilibriaError):
    """Model-file validation failure; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
