"""Exception hierarchy shared across the package."""


class LfireError(Exception):
    """Base class for all package errors."""


class ConfigurationError(LfireError):
    """Invalid configuration, shapes, or arguments."""


class DomainError(LfireError):
    """Parameter value outside the mathematical domain of a model."""


class SimulationError(LfireError):
    """A forward simulation failed (divergence, resource cap)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class TrainingError(LfireError):
    """Network training failed (non-finite loss)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class FitError(LfireError):
    """Penalized logistic regression did not converge."""

    def __init__(self, message, lambda_index=None):
        super().__init__(message)
        self.lambda_index = lambda_index


class NumericalError(LfireError):
    """A numerical routine failed (factorization, degenerate posterior)."""


class UndefinedMetricError(LfireError):
    """A metric is undefined for the given inputs (e.g. zero variance)."""
