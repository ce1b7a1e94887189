"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Input data is malformed: wrong shape, non-finite values, not a distribution."""


class PreconditionError(ValueError):
    """Input is well formed but violates a mathematical precondition."""


class CapacityError(RuntimeError):
    """Requested computation exceeds a configured size or memory budget."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class NumericalUnderflowError(ArithmeticError):
    """A quantity that must stay strictly positive collapsed to zero or below."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
