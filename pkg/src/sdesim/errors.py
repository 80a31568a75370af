"""Exception types shared across the package."""


class SdeSimError(Exception):
    """Base class for package errors."""


class InvalidParameterError(SdeSimError, ValueError):
    """A numeric argument is outside its admissible range."""


class ConfigurationError(SdeSimError, ValueError):
    """Incompatible combination of model, scheme, sampler or grid settings."""


class NonFiniteStateError(SdeSimError, FloatingPointError):
    """A path produced NaN/inf during integration."""

    def __init__(self, step, paths=None):
        self.step = step
        self.paths = paths
        where = f" on paths {list(paths)[:8]}" if paths is not None else ""
        super().__init__(f"non-finite state at step {step}{where}")


class QuadratureError(SdeSimError, ArithmeticError):
    """Numerical quadrature failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        self.achieved = achieved
        super().__init__(message if achieved is None else f"{message} (achieved {achieved:.3e})")


class FittingError(SdeSimError, ValueError):
    """Log-log order fit is not possible with the supplied levels."""
