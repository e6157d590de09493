"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class DegenerateInputError(ValueError):
    """Input degenerate for the requested operation (e.g. coincident points)."""


class ReductionOverflowError(RuntimeError):
    """Fundamental-domain reduction did not terminate within the word cap."""


class ConvergenceError(RuntimeError):
    """An iterative limit (Riccati horizon, shooting, ...) failed to certify."""


class IntegrationError(RuntimeError):
    """ODE integration step rejection or conservation failure."""


class IntegrabilityError(ValueError):
    """Half-line integrand does not decay; integral undefined."""


class ConfigError(ValueError):
    """Invalid experiment configuration (unknown key, bad value, ...)."""


class UnsupportedConfigurationError(ValueError):
    """Operation not available for the requested backend/configuration."""
