class GroundStateError(Exception):
    """Base class for every error raised by the variational package."""


class DomainError(GroundStateError, ValueError):
    """Dimension, side length or parameter outside the supported range."""


class InvalidResolutionError(GroundStateError, ValueError):
    pass


class GridMismatchError(GroundStateError, ValueError):
    pass


class CapacityError(GroundStateError, ValueError):
    """Requested more spectral modes (or nodes) than the grid can hold."""


class InsufficientBasisError(GroundStateError, ValueError):
    """Spectral basis truncated before every mode with mu_k + lambda <= tol_zero."""


class NotInConeError(GroundStateError, ValueError):
    """Scalar Nehari projection asked for a direction with B(z, z, lambda) <= 0."""


class GramDegenerateError(GroundStateError, ArithmeticError):
    """|u|_4^4 |v|_4^4 - beta^2 overlap^2 <= 0 in the two-component scaling."""


class InfeasibleScalingError(GroundStateError, ArithmeticError):
    """t^2 <= 0 or s^2 <= 0: the pair cannot be projected onto the Nehari set."""


class ResolutionError(GroundStateError, ValueError):
    """Profile narrower than the grid can resolve."""


class SamplingFailureError(GroundStateError, RuntimeError):
    pass


class NonFiniteFieldError(GroundStateError, FloatingPointError):
    """A nodal field picked up NaN or inf values."""
