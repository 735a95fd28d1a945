"""Exception types shared across the package.

The CLI maps these onto exit codes: data/shape/checkpoint problems are
validation failures (exit 2), numeric blowups are runtime failures (exit 3).
"""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class DataValidationError(ValueError):
    """Input data violates a documented contract (bad CSV, bad bars, ...)."""


class CheckpointError(ValueError):
    """A checkpoint file could not be loaded; the message names the cause."""


class NumericError(ArithmeticError):
    """A numeric operation produced non-finite values."""


class TrainingDivergedError(NumericError):
    """Training hit a non-finite loss and was aborted."""
