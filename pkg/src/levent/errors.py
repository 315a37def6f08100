"""Exception hierarchy shared by the library and the CLI."""


class LeventError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LeventError, ValueError):
    """A parameter or config entry violates its schema.

    ``key`` names the offending entry and ``line`` its position in a config
    file when known.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if line is not None:
            where = f"line {line}: "
        if key is not None and key not in message:
            message = f"{key}: {message}"
        super().__init__(where + message)


class ValidationError(LeventError, ValueError):
    """A matrix argument has the wrong shape or is not symmetric."""


class PhysicalityError(LeventError, ValueError):
    """A covariance matrix violates the uncertainty principle."""

    def __init__(self, message, min_eigenvalue=None):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class InstabilityError(LeventError, ArithmeticError):
    """A covariance flow diverged; ``time`` is when the blow-up was detected."""

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)


class ConvergenceError(LeventError, ArithmeticError):
    """No periodic steady state within the allowed number of periods."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class ControllabilityError(InstabilityError):
    """The feedback input cannot reach every mode, so the LQR cost diverges."""


class GridMismatchError(LeventError, ValueError):
    """Two time-sampled inputs do not share one sampling grid."""


class PropagationError(LeventError, ArithmeticError):
    """A stochastic trajectory produced a non-finite state."""

    def __init__(self, message, step=None, seed=None, index=None):
        self.step = step
        self.seed = seed
        self.index = index
        super().__init__(message)
