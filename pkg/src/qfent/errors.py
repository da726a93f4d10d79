"""Exception types shared across the package."""


class QfentError(Exception):
    """Base class for all package errors."""


class ConfigError(QfentError):
    """Invalid configuration or parameters (bad dimension, negative coupling,
    malformed config document, ...).  CLI exit code 2."""


class QuadratureAccuracyError(QfentError):
    """The adaptive integrator exhausted its evaluation budget before
    reaching the requested tolerance.  Carries the partial result."""

    def __init__(self, message, value=None, est_rel_error=None, n_evals=None):
        super().__init__(message)
        self.value = value
        self.est_rel_error = est_rel_error
        self.n_evals = n_evals


class IntegrandDomainError(QfentError):
    """The integrand returned NaN (or an otherwise non-finite poison value)."""


class ModelConsistencyError(QfentError):
    """An assembled density matrix violated positivity beyond tolerance —
    this indicates an internal inconsistency, not user error."""


class NumericalError(QfentError):
    """Eigensolver failure or another numerical operation that cannot be
    salvaged.  CLI exit code 3."""


class PartialGridError(QfentError):
    """More than the permitted fraction of sweep cells failed.  The partially
    filled grid is attached.  CLI exit code 4."""

    def __init__(self, message, grid=None, failed_fraction=0.0):
        super().__init__(message)
        self.grid = grid
        self.failed_fraction = failed_fraction
