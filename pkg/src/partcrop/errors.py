"""Exception hierarchy shared by all partcrop modules."""


class PartCropError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PartCropError):
    """Input violates a documented precondition or invariant."""


class FormatError(PartCropError):
    """A file does not follow the expected on-disk format."""


class CorruptionError(FormatError):
    """A file follows the format header but its payload is inconsistent."""


class TensorWriteError(PartCropError):
    """Writing a tensor file failed at the I/O level."""


class SplitError(ValidationError):
    """A manifest cannot be split as requested (e.g. an empty class)."""


class SamplingError(ValidationError):
    """An image is too degenerate to sample crops from."""


class DimensionError(ValidationError):
    """Operands have incompatible shapes."""


class NumericError(PartCropError):
    """A computation produced or would produce non-finite values."""


class GatewayError(PartCropError):
    """An encoder adapter failed to produce a response."""


class ExchangeTimeoutError(GatewayError):
    """The file-exchange partner did not answer within the deadline."""


class TrainSetupError(ValidationError):
    """The training set cannot support the requested batch schedule."""


class EvaluationError(ValidationError):
    """The evaluation set is unusable (e.g. missing labels)."""


class ConfigError(ValidationError):
    """A run configuration document is invalid.

    ``path`` names the offending JSON location, e.g. ``"crops.m"``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
