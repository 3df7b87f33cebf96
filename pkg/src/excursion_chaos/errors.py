"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument is outside the documented domain."""


class SingularParameterError(InvalidInputError):
    """A correlation parameter sits on or beyond the boundary |r| = 1."""


class InvalidModelError(InvalidInputError):
    """A covariance model violates its defining constraints."""


class DegenerateModelError(InvalidInputError):
    """The model is constant near the origin, so no local exponent exists."""


class ModelNotPSDError(InvalidInputError):
    """The covariance matrix on a grid could not be factored."""


class InputMismatchError(InvalidInputError):
    """Two sequences that must be combined share too few orders."""


class AccuracyError(RuntimeError):
    """A numerical routine could not reach its tolerance within budget."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error {achieved:.3g})")
        self.achieved = achieved
