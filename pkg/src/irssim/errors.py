"""Exception types shared across the simulator."""


class DegenerateGeometryError(ValueError):
    """Raised when a geometric construction collapses (coincident points,
    parallel sight lines, vanishing triangulation denominator)."""


class DegenerateSubspaceError(RuntimeError):
    """Raised when a subspace rotation cannot be extracted (singular V22 block)."""


class IllConditionedError(RuntimeError):
    """Raised when a matrix inverse/pseudo-inverse is numerically meaningless.

    The message carries the offending condition number.
    """


class InsufficientDataError(ValueError):
    """Raised when an estimator receives fewer samples than it needs."""


class MatchingFailureError(RuntimeError):
    """Raised when the angle-pair matching step has no feasible candidate left."""
