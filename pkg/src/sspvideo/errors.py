"""Exception taxonomy shared across the package.

Every failure the library raises deliberately goes through one of these
types so callers (and the CLI exit-code mapping) can tell configuration
mistakes apart from numeric blowups and broken files.
"""


class SSPError(Exception):
    """Base class for all deliberate errors raised by this package."""


class DimensionError(SSPError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(SSPError, ValueError):
    """A value sits outside the mathematical domain of an operation."""


class ConfigError(SSPError, ValueError):
    """A configuration value or key is invalid. CLI exit code 2."""


class NumericError(SSPError, ArithmeticError):
    """A non-finite value surfaced where finite math was required. CLI exit code 3."""


class FormatError(SSPError, ValueError):
    """A file on disk does not match its expected binary/CSV layout."""


class ContractError(SSPError, RuntimeError):
    """An internal invariant was violated (e.g. a frozen tensor got a gradient)."""


class NotFittedError(SSPError, RuntimeError):
    """Estimator method needs a fitted model; call fit() first."""
