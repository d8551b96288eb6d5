"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid parameters for a generator, transform or learner."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (overflow, Cholesky, non-finite loss)."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DomainError(ValueError):
    """W lies outside the log-det constraint's domain."""


class DegenerateDataError(ValueError):
    """A column has zero variance."""


class InfeasibleError(ValueError):
    """Requested sampling scheme would almost never produce complete rows."""


class NonConvergenceError(RuntimeError):
    """An outer optimization loop stalled; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FormatError(ValueError):
    """Malformed input file."""
