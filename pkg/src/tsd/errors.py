"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(ArithmeticError):
    """An operation would leave the domain of finite real numbers."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class FormatError(ValueError):
    """A binary file does not follow the expected layout."""


class LengthError(FormatError):
    """A binary file is shorter or longer than its header declares."""


class ConfigError(ValueError):
    """A configuration file contains an unknown key or an invalid value."""
