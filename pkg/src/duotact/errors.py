"""Exception types shared across the package."""


class DuotactError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(DuotactError, ValueError):
    """An argument violates a documented precondition."""


class GeometryInfeasibleError(DuotactError):
    """The requested contact geometry has no well-posed solution."""


class AmbiguousMatchError(DuotactError):
    """Two match candidates are closer than the tie tolerance."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class InsufficientDataError(DuotactError):
    """Not enough samples to carry out the requested estimation step."""


class NoContactError(DuotactError):
    """The reconstructed field peak is below the contact noise floor."""


class FitFailedError(DuotactError):
    """Nonlinear fit did not converge within the iteration budget."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(DuotactError):
    """Malformed or inconsistent experiment configuration."""


class DataError(DuotactError):
    """Dataset files are missing, corrupted, or inconsistent."""
