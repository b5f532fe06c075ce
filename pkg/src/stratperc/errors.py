"""Exception types shared across the package."""


class StratPercError(Exception):
    """Base class for all package-specific errors."""


class ZeroVectorError(StratPercError):
    """A direction was required but the vector has (near-)zero norm."""


class InvalidBandError(StratPercError):
    """Band width outside (0, 1]."""


class InvalidCostError(StratPercError):
    """Manipulation cost must be strictly positive."""


class InvalidConfigError(StratPercError):
    """Configuration failed validation; carries field-level messages."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class PreconditionViolatedError(StratPercError):
    """An operation was called outside its contract."""


class DrawBudgetExceededError(StratPercError):
    """A rejection-sampling search used more draws than its budget."""

    def __init__(self, message, context=None):
        self.context = dict(context or {})
        super().__init__(message)


class InsufficientDataError(StratPercError):
    """Not enough grid points or seeds for a scaling fit."""
