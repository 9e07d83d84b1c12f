"""Error types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation requires."""


class NumericError(ArithmeticError):
    """A forward or backward pass produced NaN or Inf."""


class StateError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class EstimationError(ValueError):
    """A statistical estimate cannot be formed from the given samples."""


class ParseError(ValueError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ExperimentError(RuntimeError):
    """An experiment stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
