"""Exception hierarchy for peakpower."""


class PeakPowerError(Exception):
    """Base class for all peakpower errors."""


class ParameterError(PeakPowerError, ValueError):
    """A parameter is outside its admissible range."""


class MeanShapeError(PeakPowerError, ValueError):
    """An operation was applied to a mean-model variant it is not defined for."""


class ConsistencyError(PeakPowerError, ValueError):
    """Inputs violate a consistency precondition (e.g. e_mu > e_m_total)."""


class QuadratureError(PeakPowerError, RuntimeError):
    """Numerical integration failed to converge.

    Carries the partial estimate and its error bound so callers can decide
    whether the result is still usable.
    """

    def __init__(self, message, value=None, err_estimate=None):
        super().__init__(message)
        self.value = value
        self.err_estimate = err_estimate


class SolverError(PeakPowerError, RuntimeError):
    """Root bracketing or iteration failed."""


class EstimationError(PeakPowerError, ValueError):
    """Data-driven estimation failed (zero variance, non-concave fit, ...)."""


class BundleFormatError(PeakPowerError, ValueError):
    """A volume bundle's manifest and payload disagree or are malformed."""


class ConfigError(PeakPowerError, ValueError):
    """An experiment config failed schema validation."""
