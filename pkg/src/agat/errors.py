"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class AgatError(Exception):
    """Base class for every error raised by this package."""


class NearSingular(AgatError):
    """A linear system is too ill-conditioned to solve reliably."""


class OffManifold(AgatError):
    """A point violates the constraint of its manifold."""


class NotTangent(AgatError):
    """A vector is not tangent to the manifold at its base point."""


class RetractionFailed(AgatError):
    """Newton projection onto the constraint set did not converge."""


class RankDeficientConstraint(AgatError):
    """The constraint Jacobian lost rank."""


class DegenerateCritical(AgatError):
    """A critical point of a candidate navigation function is degenerate."""


class SingularPair(AgatError):
    """The configuration pair lies too close to the error map's singular set.

    ``kind`` names the branch of the singular set when known, for example
    ``"coincident"`` or ``"antipodal"``.
    """

    def __init__(self, message: str = "", kind: str | None = None):
        super().__init__(message)
        self.kind = kind


class NearSingularTransport(AgatError):
    """The transport map cannot carry the requested acceleration."""


class NonFiniteDerivative(AgatError):
    """A state derivative evaluated to inf or nan."""


class UnknownPreset(AgatError, KeyError):
    """No built-in scenario has the requested name."""


class InfeasibleInitialCondition(AgatError):
    """Initial data violates the constraints and repair is disabled."""


class NotSkewSymmetric(AgatError, ValueError):
    """A matrix passed to ``vee`` is not skew-symmetric."""
