"""Exception types shared across the keydyn package."""


class KeydynError(Exception):
    """Base class for all keydyn errors."""


class SampleSchemaError(KeydynError):
    """Raised when an ingested record does not match the sample schema."""


class SampleInvariantError(KeydynError):
    """Raised when a structurally valid sample violates a domain invariant."""

    def __init__(self, message, event_index=None, field=None):
        super().__init__(message)
        self.event_index = event_index
        self.field = field


class InsufficientDataError(KeydynError):
    """Raised when an operation needs more samples than were provided."""


class DegeneratePcaError(KeydynError):
    """Raised when PCA is fit on data with zero covariance."""


class NotCalibratedError(KeydynError):
    """Raised when a decision is requested before threshold calibration."""


class TrainingDivergedError(KeydynError):
    """Raised when a training loss becomes NaN or infinite."""

    def __init__(self, message, epoch, batch, loss_history):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.loss_history = loss_history


class ConfigError(KeydynError):
    """Raised when an experiment or service configuration is invalid."""
