"""Exception hierarchy shared across the package.

``ConfigError`` covers bad configuration or malformed input files; everything
numerical (divergent integrations, degenerate spectra, failed factorizations,
unusable observation sets) derives from ``NumericalError``.  The CLI maps the
two branches to distinct exit codes.
"""


class FpesnError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FpesnError):
    """Invalid configuration value or malformed configuration/data file."""


class MalformedFileError(ConfigError):
    """A delimited series or report file could not be parsed."""


class NumericalError(FpesnError):
    """Base class for runtime numerical failures."""


class DegenerateSpectrumError(NumericalError):
    """Random recurrent matrix has numerically zero spectral radius."""


class SpectralRadiusError(NumericalError):
    """Spectral-radius iteration failed to converge within its cap."""

    def __init__(self, message, last_estimate):
        super().__init__(message)
        self.last_estimate = last_estimate


class FactorizationError(NumericalError):
    """Ridge normal equations could not be factorized."""

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class NoObservationsError(NumericalError):
    """A variable has no observed samples at all."""


class InsufficientObservationsError(NumericalError):
    """A variable has no observed samples usable for fitting."""


class BlowUpError(NumericalError):
    """A trajectory integration produced non-finite or runaway values."""
