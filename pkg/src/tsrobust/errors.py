"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(ToolkitError):
    """An argument violates an operation's preconditions."""


class ConfigError(ToolkitError):
    """An experiment configuration is malformed or internally inconsistent."""


class DegenerateReference(ToolkitError):
    """The reference sequence is all-zero, so a normalized metric is undefined."""


class MissingDistribution(ToolkitError):
    """A distributional metric was requested for a point-only forecast."""


class ModelError(ToolkitError):
    """A forecaster failed while answering a query."""


class NoGradientCapability(ModelError):
    """The model cannot report input gradients."""


class NoLatentCapability(ModelError):
    """The model does not expose an encoder/decoder split."""


class NotTrainable(ModelError):
    """The model has no trainable parameters."""


class QueryLimitExceeded(ModelError):
    """The prediction-query budget for an attack run is exhausted.

    Raised by an attack objective when the next query would exceed the
    configured limit; attack loops catch it and return their best iterate
    with ``converged=False``.
    """


class DivergedTraining(ToolkitError):
    """Training loss became non-finite or exploded.

    Carries the loss history recorded up to the point of divergence.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class ProtocolError(ModelError):
    """A bridge peer sent a malformed or inconsistent message."""


class VersionMismatch(ProtocolError):
    """The bridge peer speaks a different protocol version."""


class BridgeTimeout(ModelError):
    """No response arrived on a bridge connection within the deadline."""


class IoError(ToolkitError):
    """Reading or writing an artifact (report, checkpoint, dataset) failed."""
