"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: validation/parse problems
exit 2, config/shape/modality problems exit 3, numeric failures exit 4.
"""


class ConvstyleError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ConvstyleError):
    """Tensor or matrix shapes are incompatible for the requested operation."""


class ConfigError(ConvstyleError):
    """A configuration value or key is invalid."""


class ValidationError(ConvstyleError):
    """Input data violates a documented invariant."""


class ParseError(ValidationError):
    """A corpus line could not be parsed. Carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CapacityError(ValidationError):
    """More distinct items than the fixed-size encoding can hold."""


class MissingModalityError(ConvstyleError):
    """A required modality (e.g. style vectors) is absent from the data."""


class NumericError(ConvstyleError):
    """A computation produced a non-finite value."""
