"""Exception hierarchy shared across the package."""


class PiglmError(Exception):
    """Base class for all package errors."""


class DomainError(PiglmError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DesignError(PiglmError, ValueError):
    """The design matrix is unusable (e.g. rank deficient)."""


class ConvergenceError(PiglmError, RuntimeError):
    """An iterative procedure failed to converge."""


class BoundaryError(PiglmError, RuntimeError):
    """A result is unavailable because the fit diverged to the boundary."""


class DegeneracyError(PiglmError, ValueError):
    """Input data are degenerate (e.g. all samples identical)."""


class DegreesOfFreedomError(PiglmError, ValueError):
    """Not enough residual degrees of freedom for the requested quantity."""


class SupportError(PiglmError, ValueError):
    """A density or grid was evaluated outside its support everywhere."""


class MixingError(PiglmError, RuntimeError):
    """An MCMC chain failed to move after adaptation."""


class HarnessError(PiglmError, RuntimeError):
    """Every replicate in a simulation run failed."""


class ParseError(PiglmError, ValueError):
    """A data file could not be parsed; carries the offending row number."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row
