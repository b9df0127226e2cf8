"""Exception hierarchy.

Everything raised on purpose derives from AideError so callers (and the
CLI exit-code mapping) can distinguish our failures from genuine bugs.
"""


class AideError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(AideError, ValueError):
    """A caller passed a value that violates a documented precondition."""


class DecodeError(AideError):
    """Compressed image data could not be decoded.

    `offset` is a best-effort byte offset of the first structural
    inconsistency found by walking the container format.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(AideError):
    """The file is not one of the supported image formats."""


class EmptyPatchGridError(AideError):
    """The image is smaller than one patch in at least one dimension."""


class InsufficientPatchesError(AideError):
    """Fewer patches available than the selection step requires."""

    def __init__(self, available, required):
        super().__init__(
            f"need at least {required} patches for selection, image provides {available}"
        )
        self.available = available
        self.required = required


class ManifestError(AideError):
    """A dataset manifest or corpus directory layout is malformed."""


class ConfigError(AideError):
    """A model configuration file is malformed or inconsistent."""


class EmbeddingFormatError(AideError):
    """An embedding table file is malformed."""


class CheckpointError(AideError):
    """A checkpoint file is malformed or inconsistent."""


class UnknownIdError(AideError):
    """An image identifier has no entry in the embedding table."""


class UndefinedMetricError(AideError):
    """A metric is undefined for the given inputs (e.g. AP with no positives)."""


class TrainingError(AideError):
    """Training cannot proceed (bad split, config mismatch on resume, ...)."""


class OptimizerError(AideError):
    """A non-finite value reached the optimizer."""
