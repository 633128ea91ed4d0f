"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration value or malformed config document."""


class ShapeError(ValueError):
    """Array shapes disagree with the declared contract."""


class NumericError(ArithmeticError):
    """A computation produced or would produce non-finite values."""


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss.  Carries the last good state."""

    def __init__(self, message, state=None, records=None, iteration=None):
        super().__init__(message)
        self.state = state
        self.records = records if records is not None else []
        self.iteration = iteration
