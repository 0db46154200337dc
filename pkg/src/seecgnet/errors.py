"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An operand shape does not satisfy an operation's contract."""


class GraphError(RuntimeError):
    """Misuse of the recorded computation graph (empty tape, repeated backward, ...)."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration, including weight-file fingerprint mismatches."""


class DataError(ValueError):
    """A dataset file or manifest failed validation.

    ``details`` optionally carries one message per offending record so callers
    can report every problem at once.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = list(details) if details else []
