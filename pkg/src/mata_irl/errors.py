"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called outside its precondition."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration file or option is invalid."""
