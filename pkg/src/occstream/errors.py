"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or missing configuration key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ContractError(ValueError):
    """A caller violated an operation's precondition (dimension, range, ...)."""


class StateError(RuntimeError):
    """An operation was invoked on state that cannot support it."""


class InitializationError(RuntimeError):
    """A framework could not be initialized from its initialization window."""


class StreamParseError(ValueError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(ValueError):
    """Input data does not match the declared schema."""


class ComparisonError(ValueError):
    """Two experiment runs cannot be compared."""
