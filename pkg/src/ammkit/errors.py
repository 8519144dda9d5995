"""Exception types shared across the toolkit."""


class AmmError(Exception):
    """Base class for toolkit errors."""


class DomainError(AmmError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class DepletionError(AmmError):
    """A trade would remove all of one asset from a pool."""


class NotViableError(AmmError):
    """Liquidity provision is not profitable under the supplied parameters."""


class ConvergenceError(AmmError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class ConfigError(AmmError):
    """Invalid user configuration (CLI exit code 2)."""


class DataError(AmmError):
    """Malformed or insufficient input data (CLI exit code 3)."""
