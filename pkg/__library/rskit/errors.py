# ===================================================================================================
# ERRORS
# ===================================================================================================


class RskitError(Exception):
    """Base class for every error raised by rskit."""


class ParameterError(RskitError, ValueError):
    """Invalid loss, solver, schedule or model parameter."""


class UnsupportedShiftError(ParameterError):
    """The shift rule is only defined for two-dimensional parameters."""


class ShapeError(RskitError, ValueError):
    """Dimension mismatch between vectors, points or datasets."""


class InputValidationError(RskitError, ValueError):
    """Malformed input: unnormalized weights, non-finite data, bad config."""


class DatasetFormatError(InputValidationError):
    """CSV content that cannot be parsed into a dataset or distribution."""


class ConsistencyError(RskitError, ValueError):
    """Two computed quantities violate a relation that must hold between them."""


class ConvergenceError(RskitError, RuntimeError):
    """A solver did not reach its tolerance.

    Attributes:
        residual: last measured residual (objective change, status gap, ...).
        iterations: iterations or solves performed before giving up.
    """

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations

    def __str__(self):
        msg = super().__str__()
        if self.residual is not None:
            msg += f" (residual={self.residual:.3e}, iterations={self.iterations})"
        return msg


class BracketError(ConvergenceError):
    """Bisection bracket does not enclose a sign change."""
