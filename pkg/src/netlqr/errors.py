"""Exception hierarchy shared by the library and the CLI exit codes."""


class NetLQRError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParameterError(NetLQRError, ValueError):
    """Invalid argument or configuration value."""

    exit_code = 2


class TopologyError(ParameterError):
    """Graph is malformed or disconnected."""


class DegenerateInputError(ParameterError):
    """Input carries no information for the requested fit (e.g. all-zero matrix)."""


class StabilityError(NetLQRError, ArithmeticError):
    """Closed loop A - BK is not Schur stable.

    ``step`` is set when the failure happened inside an iterative run.
    """

    exit_code = 3

    def __init__(self, message, step=None, radius=None):
        super().__init__(message)
        self.step = step
        self.radius = radius


class NumericalError(NetLQRError, ArithmeticError):
    """A numerical routine failed to converge."""

    exit_code = 4


class StabilizabilityError(NumericalError):
    """Riccati iteration did not converge; (A, B) is likely not stabilizable."""
