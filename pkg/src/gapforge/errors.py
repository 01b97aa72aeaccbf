class GapforgeError(Exception):
    """Base class for errors raised by gapforge."""


class ValidationError(GapforgeError, ValueError):
    """Input violates a documented precondition."""


class ConsistencyError(GapforgeError, RuntimeError):
    """An internal invariant failed; indicates a bug, not bad input."""


class PlacementError(GapforgeError, ValueError):
    """Inclusions cannot be laid out disjointly inside the unit cell."""


class AlignmentError(GapforgeError, ValueError):
    """Snapping to the mesh collapsed or merged inclusions."""


class NumericalFailure(GapforgeError, RuntimeError):
    """Eigensolver did not reach the requested residual.

    ``residuals`` holds the best relative residuals obtained.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
