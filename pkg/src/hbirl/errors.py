class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class ConfigurationError(ValueError):
    """Raised for option combinations that cannot be honoured."""


class InconsistentDemoError(ValueError):
    """Raised when a demonstration admits no transition-consistent completion."""


class InconsistentLatticeError(ValueError):
    """Raised when no trajectory of the required length has positive probability."""
