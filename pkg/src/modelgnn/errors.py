"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class DegenerateInputError(ValueError):
    pass


class FormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class NumericError(ArithmeticError):
    def __init__(self, message, sample_index=None):
        if sample_index is not None:
            message = f"{message} (sample {sample_index})"
        super().__init__(message)
        self.sample_index = sample_index


class ConsistencyError(RuntimeError):
    """Raised when an algorithm violates a property it guarantees (a bug)."""
