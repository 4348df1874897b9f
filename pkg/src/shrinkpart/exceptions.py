class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class CapacityError(ValueError):
    """Request exceeds an enumeration or table capacity."""


class ConfigError(ValueError):
    """Invalid run configuration or input file."""
