"""Exception hierarchy.

Two families are distinguished because the command line maps them to
different exit codes: :class:`ValidationError` for bad inputs and
:class:`NumericalError` for failures of an otherwise valid computation.
"""


class FpjpaError(Exception):
    """Base class for all package errors."""


class ValidationError(FpjpaError, ValueError):
    """Input values violate a documented precondition."""


class DegenerateBiasError(ValidationError):
    """Flux bias too close to the point where the SQUID inductance diverges."""


class DesignError(ValidationError):
    """Design targets cannot be met by any circuit."""


class NumericalError(FpjpaError, ArithmeticError):
    """A valid computation failed numerically."""


class ConvergenceError(NumericalError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ThresholdError(NumericalError):
    """The parametric drive is at or above the oscillation threshold."""


class NormalizationError(NumericalError):
    """The reference reflection is too small to normalize by."""


class BandwidthError(NumericalError):
    """A 3 dB bandwidth cannot be determined from the sampled spectrum."""
