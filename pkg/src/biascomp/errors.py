"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad inputs, files or
configuration; CLI exit code 1) and :class:`NumericalError` (a computation
that could not be carried out reliably; CLI exit code 2).
"""


class BiasCompError(Exception):
    """Base class for all package errors."""


class ValidationError(BiasCompError, ValueError):
    pass


class InvalidInputError(ValidationError):
    pass


class FormatError(ValidationError):
    """A file or time series does not have the expected layout."""


class ConfigError(ValidationError):
    pass


class IdentifiabilityError(ValidationError):
    """The data does not excite the quantity being identified."""


class NumericalError(BiasCompError, ArithmeticError):
    pass


class NumericalFailure(NumericalError):
    """A filter update produced a non-positive innovation variance or a
    covariance that is no longer positive semi-definite."""


class FitError(NumericalError):
    """Polynomial fit rejected; ``diagnostics`` holds the reason."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
