"""Error taxonomy shared across the package."""


class InputDomainError(ValueError):
    """An input value is outside the function's stated domain."""


class ConfigError(ValueError):
    """A configuration object is inconsistent or incomplete."""


class ProtocolViolation(RuntimeError):
    """A codec broke the session protocol (wrong length, wrong round, ...)."""


class NumericalFailure(RuntimeError):
    """A numerical computation produced non-finite or unusable values."""


class RangeError(ValueError):
    """A query falls outside the supported range (extrapolation refused)."""
