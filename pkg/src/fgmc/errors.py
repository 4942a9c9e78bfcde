"""Exception and warning types raised by fgmc."""


class FGMCError(Exception):
    """Base class for all fgmc errors."""


class DimensionError(FGMCError, ValueError):
    """An assignment does not match the number of model variables."""


class ResourceCapError(FGMCError):
    """A computation would exceed its configured size cap."""


class UnsupportedKernelError(FGMCError):
    """The kernel is not supported by the requested engine."""


class PreconditionError(FGMCError, ValueError):
    pass


class EmptyBinError(FGMCError):
    """Rejection sampling exhausted its draw budget; the target bin is likely empty."""


class ContractViolation(FGMCError):
    """An estimator received samples that break its input contract."""


class UnsupportedEstimatorError(FGMCError):
    pass


class IncompleteInputError(FGMCError, ValueError):
    pass


class CancellationWarning(UserWarning):
    """Z_f is a small difference of large per-bin sums."""
