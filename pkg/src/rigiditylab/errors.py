"""Exception types shared across the package."""

from .circle import PrecisionExhausted


class RigidityLabError(Exception):
    """Base class for domain errors raised by this package."""


class InvalidSpec(RigidityLabError, ValueError):
    """A sequence specification or configuration value is malformed."""


class CapExceeded(RigidityLabError):
    """An enumeration or convolution would exceed its configured size cap."""


class PreconditionError(RigidityLabError):
    """A verified precondition of a construction failed."""


class RelationViolation(PreconditionError):
    """A declared recurrence does not hold; ``index`` is the first bad k."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class AmbiguousAtom(RigidityLabError):
    """Fixed-point atoms cannot be separated from the query point."""


class NotMonotone(RigidityLabError, ValueError):
    """Input sequence is not strictly increasing."""


class ConfigError(RigidityLabError):
    """Configuration error carrying the dotted path of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


__all__ = [
    "AmbiguousAtom", "CapExceeded", "ConfigError", "InvalidSpec", "NotMonotone",
    "PrecisionExhausted", "PreconditionError", "RelationViolation", "RigidityLabError",
]
