"""Exception and warning types raised across the package."""


class RdError(Exception):
    """Base class for all package errors."""


class ConfigError(RdError):
    """Malformed configuration file, DGP spec, or CLI option."""


class InvalidParameter(RdError, ValueError):
    """A numeric argument is outside its allowed range."""


class InvalidSample(RdError, ValueError):
    """The sample cannot be used for the requested operation."""


class DataError(RdError):
    """Input rows could not be parsed.

    ``rejected`` holds ``(row_number, reason)`` pairs for every bad row.
    """

    def __init__(self, message, rejected=()):
        super().__init__(message)
        self.rejected = list(rejected)


class IdentificationError(RdError):
    """Too few support points inside the estimation window."""

    def __init__(self, message, side=None, count=None, required=None):
        super().__init__(message)
        self.side = side
        self.count = count
        self.required = required


class UnsupportedConfiguration(RdError):
    """Requested combination of options is not implemented."""


class WeakFirstStage(RdError):
    """First-stage jump is exactly zero, so the ratio estimator is undefined."""


class InvalidPairing(RdError):
    """Two fits do not share the same estimation window."""


class UndefinedEstimand(RdError):
    """The target parameter is not defined for this DGP."""


class NumericError(RdError):
    """A numerical routine failed to reach its tolerance."""


class SolverError(RdError):
    """The quadratic program solver did not converge."""

    def __init__(self, message, iterations=None, kkt_residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.kkt_residual = kkt_residual


class DegenerateVarianceWarning(UserWarning):
    """Standard error is zero, so the folded-normal ratio is undefined."""


class EmptySideWarning(UserWarning):
    """Trimming left one side of the cutoff without observations."""
