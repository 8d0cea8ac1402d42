"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidState(RuntimeError):
    pass


class TrainingDivergence(RuntimeError):
    """Raised when a training step produces a non-finite loss."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NumericalFailure(ArithmeticError):
    pass


class UndefinedScore(ValueError):
    pass
