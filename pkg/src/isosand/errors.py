"""Exception types shared across the package."""


class IsosandError(Exception):
    """Base class for all package-specific errors."""


class PoleError(IsosandError, ValueError):
    """An elliptic-function evaluation or integration hit a real pole."""


class ConstructionError(IsosandError, ValueError):
    """A graph builder received degenerate or invalid input."""


class StructuralError(IsosandError):
    """A built graph violates a structural invariant (e.g. nonzero holonomy)."""


class NotAdmissibleError(IsosandError, ValueError):
    """A direction cannot be reoriented into an open half-plane."""


class RootLocationError(IsosandError):
    """The saddle-point root finder found no bracketing sign change."""

    def __init__(self, message, samples=None):
        super().__init__(message)
        self.samples = samples


class RegionTooSmallError(IsosandError):
    """A sandpile shape reached the margin of its patch."""


class NumericalError(IsosandError):
    """An iterative solver failed to reach its target accuracy."""


class InvariantViolation(IsosandError):
    """A verified model identity failed beyond tolerance."""
