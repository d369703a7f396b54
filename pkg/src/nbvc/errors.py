"""Exception hierarchy shared across the codec."""


class NbvcError(Exception):
    """Base error; carries a short machine-readable code for the CLI."""

    code = "error"

    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = dict(context or {})


class ShapeMismatchError(NbvcError):
    code = "shape_mismatch"


class IngestionError(NbvcError):
    code = "ingestion"


class FlowProviderError(IngestionError):
    code = "flow_provider"


class CropError(NbvcError):
    code = "missing_original_size"


class ConditioningError(NbvcError):
    """A segment outside the allowed conditioning set was supplied."""

    code = "conditioning_violation"


class CoderError(NbvcError):
    code = "coder"


class DecodeError(CoderError):
    """Lossless decode failure, positioned at a byte offset."""

    code = "decode"

    def __init__(self, message, offset, context=None):
        ctx = dict(context or {})
        ctx["offset"] = offset
        super().__init__(message, ctx)
        self.offset = offset


class ContainerFormatError(NbvcError):
    code = "container_format"


class ModelHashMismatch(ContainerFormatError):
    code = "model_hash_mismatch"


class TrainingDivergedError(NbvcError):
    code = "training_diverged"


class MetricError(NbvcError):
    code = "metric"
