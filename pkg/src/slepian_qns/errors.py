"""Exception hierarchy."""


class SlepianError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(SlepianError, ValueError):
    """A parameter violates an operation's precondition."""


class AreaNormalizationError(SlepianError, ValueError):
    """Signed-area normalization requested for a zero-area sequence."""


class LeakageRatioError(SlepianError, ArithmeticError):
    """The reference sequence has no measurable out-of-band power."""


class GridMismatchError(SlepianError, ValueError):
    """A PSD cannot be evaluated on the filter's frequency grid."""


class ConfigError(SlepianError, ValueError):
    """Invalid experiment configuration."""


class ConvergenceError(SlepianError, RuntimeError):
    """An iterative procedure did not converge."""
