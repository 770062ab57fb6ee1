"""Exception types shared across the package."""


class DlraError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(DlraError, ValueError):
    """Array shapes or modes are inconsistent with the requested operation."""


class RankError(DlraError, ValueError):
    """A requested rank exceeds what the data admits."""


class ConfigurationError(DlraError, ValueError):
    """A solver or run configuration is invalid for the given problem."""


class GramianSingularError(DlraError, RuntimeError):
    """A basis-overlap matrix is numerically singular (condition number too large)."""


class DivergenceError(DlraError, RuntimeError):
    """Non-finite values were detected in the factors during time stepping."""


class MemoryGuardError(DlraError, RuntimeError):
    """A dense computation would exceed the configured entry cap."""
