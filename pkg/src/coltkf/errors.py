"""Exception types raised across the package."""


class ColTKFError(Exception):
    """Base class for all package errors."""


class NotPositiveSemiDefinite(ColTKFError):
    pass


class DegenerateVariance(ColTKFError):
    """Variance of a Gaussian fell below the working floor."""


class ZeroVariance(ColTKFError):
    """Censored variance underflowed, so a standardized moment is undefined."""


class GainFloorHit(ColTKFError):
    """Innovation variance below the gain floor; the update was skipped."""


class NonFinite(ColTKFError):
    pass


class ShapeMismatch(ColTKFError, ValueError):
    pass


class UnknownExperiment(ColTKFError, KeyError):
    pass


class ModelError(ColTKFError, ValueError):
    """Model parameters violate a structural requirement (stationarity, PSD, ...)."""
