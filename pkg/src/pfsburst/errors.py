class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class CapacityError(RuntimeError):
    """Problem size exceeds what an exhaustive computation is allowed to handle."""


class ConvergenceError(ArithmeticError):
    """Iterative or adaptive numerical routine did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """Invalid experiment or scheduler configuration."""
