"""Exception types shared across accelkit modules."""


class AccelKitError(Exception):
    """Base class for all accelkit-specific errors."""


class DimensionMismatchError(AccelKitError):
    """Operands have incompatible shapes."""


class SingularMatrixError(AccelKitError):
    """A pivot fell below the relative singularity threshold."""


class BreakdownError(AccelKitError):
    """Arnoldi vector norm underflowed before the residual converged."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"Arnoldi breakdown at step {step}")


class IndefiniteAfterRegularizationError(AccelKitError):
    """Cholesky kept failing after the ridge escalation retries."""


class NotAdmissibleError(AccelKitError):
    """Vector violates the block mask of a restricted inner product."""


class LinearSolveFailureError(AccelKitError):
    """An inner linear solve (Oseen/Stokes) could not be completed."""


class InsufficientDataError(AccelKitError):
    """Not enough trace data to compute the requested estimate."""


class ConfigError(AccelKitError):
    """Invalid solver/problem configuration; names the offending field."""
