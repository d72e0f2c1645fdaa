"""Exception hierarchy."""


class OwlError(Exception):
    """Base class for package errors."""


class ArgumentError(OwlError, ValueError):
    """Invalid argument: wrong shape, non-finite, non-symmetric, ..."""


class InsufficientDataError(OwlError, ValueError):
    """Too few (or too degenerate) samples for an estimate."""


class ModeError(OwlError, ValueError):
    """Operation not defined for the configured noise model or output size."""


class ConvergenceError(OwlError, RuntimeError):
    """An iteration failed to converge.

    ``history`` carries the iterates produced before the failure.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class BenchmarkDefinitionError(OwlError, ValueError):
    """A benchmark parameterisation yields an invalid system."""
