"""
Custom exceptions for the SHIELD patching toolkit.
"""
from typing import Optional, Sequence, Tuple


class ShieldError(Exception):
    """Root of every error raised by this package."""
    pass


class ConfigurationError(ShieldError):
    """Custom exception for configuration-related errors."""
    pass


class DatasetError(ShieldError):
    """Errors while ingesting or generating a dataset."""
    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.row = row

    def __str__(self):
        if self.row is not None:
            return f"Row {self.row}: {self.message}"
        return self.message


class InvalidInputError(ShieldError):
    """A precondition of an operation was violated by its caller."""
    pass


class ShapeError(InvalidInputError):
    """Operands of an autodiff primitive have incompatible shapes."""
    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        self.detail = detail
        super().__init__(str(self))

    def __str__(self):
        shapes = ", ".join(str(s) for s in self.shapes)
        msg = f"Shape mismatch in '{self.op}': {shapes}"
        return f"{msg} ({self.detail})" if self.detail else msg


class NumericalError(ShieldError):
    """Non-finite values appeared in a loss, gradient or parameter."""
    def __init__(self, message: str, stage: str = "unknown", index: Optional[object] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage
        self.index = index

    def __str__(self):
        where = f" at {self.index}" if self.index is not None else ""
        return f"Numerical failure during '{self.stage}'{where}: {self.message}"


class BudgetExhausted(ShieldError):
    """The victim was queried beyond its budget."""
    def __init__(self, budget: int):
        super().__init__(f"Query budget of {budget} exhausted")
        self.budget = budget


class CheckpointError(ShieldError):
    """Unreadable checkpoint, or a checkpoint that does not match its base model."""
    pass


class ExperimentError(ShieldError):
    """A general wrapper for errors occurring during an experiment command."""
    def __init__(self, message: str, stage: str = "Unknown Stage", original_exception: Optional[Exception] = None):
        super().__init__(message)
        self.stage = stage
        self.original_exception = original_exception
        self.message = message

    def __str__(self):
        if self.original_exception:
            return (f"Experiment Error at stage '{self.stage}': {self.message} "
                    f"(Caused by: {type(self.original_exception).__name__}: {self.original_exception})")
        return f"Experiment Error at stage '{self.stage}': {self.message}"
