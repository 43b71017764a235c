"""Exception taxonomy shared across the package.

``ValidationError`` covers bad user input (CLI exits 1); everything else is
a runtime failure (CLI exits 2).
"""


class MetabandError(Exception):
    """Base class for package errors."""


class ValidationError(MetabandError):
    """Caller passed arguments that violate an operation's preconditions."""


class ShapeError(ValidationError):
    """Tensor/array shapes are incompatible with the requested operation."""


class DataFormatError(MetabandError):
    """A container file is malformed, truncated, or has an unsupported dtype."""


class GradientContractError(MetabandError):
    """The autodiff contract was violated (e.g. backward on a non-scalar)."""


class GenerationError(ValidationError):
    """A synthetic-dataset spec cannot be realized (e.g. more classes than pixels)."""


class TrainingError(MetabandError):
    """Training diverged or could not proceed (NaN loss, empty phase, ...)."""
