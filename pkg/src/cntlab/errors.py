"""Exception types shared across the package."""


class CntLabError(Exception):
    """Base class for all library errors."""


class ShapeError(CntLabError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(CntLabError):
    """A configuration value is invalid or inconsistent."""


class ValidationError(CntLabError):
    """Input data violates a documented precondition."""


class DomainError(CntLabError):
    """An argument lies outside the mathematical domain of the function."""


class UsageError(CntLabError):
    """The API was called in an unsupported way (wrong sequence, missing inputs)."""


class GenerationError(CntLabError):
    """Rejection sampling gave up before producing a valid sample."""


class TrainingDivergedError(CntLabError):
    """Training produced a non-finite loss. Carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}
