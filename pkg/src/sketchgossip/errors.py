"""Exception types shared across the package."""


class SketchGossipError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class InvalidInputError(SketchGossipError, ValueError):
    """Malformed or non-finite input data."""

    exit_code = 2


class InvalidParameterError(SketchGossipError, ValueError):
    """A method parameter lies outside its admissible range."""

    exit_code = 2


class ConfigError(InvalidInputError):
    """Configuration validation failure; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InconsistentSystemError(SketchGossipError):
    """The linear system has no solution."""

    def __init__(self, residual):
        super().__init__(f"linear system is inconsistent (residual norm {residual:.3e})")
        self.residual = residual


class UnsupportedClosedFormError(SketchGossipError):
    """E[Z] has no closed form for the distribution; use a Monte-Carlo estimate."""


class UnsupportedGeometryError(SketchGossipError):
    """The method requires a different geometry matrix B."""


class RateUndefinedError(SketchGossipError):
    """Momentum parameters outside the range where the momentum rate bound holds."""

    def __init__(self, message, beta_bound):
        super().__init__(message)
        self.beta_bound = beta_bound


class PositiveDefinitenessError(SketchGossipError):
    """A matrix expected to be positive definite is singular."""


class GenerationError(SketchGossipError):
    """A random generator failed to produce a valid object."""


class ExactnessWarning(UserWarning):
    """Null(E[Z]) differs from Null(A); iterates may not reach the projection of x0."""
