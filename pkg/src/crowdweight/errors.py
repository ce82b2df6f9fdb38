"""Exception types raised across the package."""


class CrowdweightError(Exception):
    """Base class for all package errors."""


class ParseError(CrowdweightError, ValueError):
    """Malformed LibSVM or CSV input.  ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedDatasetError(CrowdweightError, ValueError):
    pass


class SingularMatrixError(CrowdweightError, ArithmeticError):
    pass


class AssumptionViolatedError(CrowdweightError, ValueError):
    """A separability or margin precondition does not hold at ``index``."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class InsufficientDataError(CrowdweightError, ValueError):
    pass


class ReplicateError(CrowdweightError, RuntimeError):
    def __init__(self, replicate, cause):
        self.replicate = replicate
        super().__init__(f"replicate {replicate} failed: {cause!r}")
