"""Exception hierarchy shared by every stage of the pipeline."""


class SplatPruneError(Exception):
    """Base class for all library errors."""


class PlyFormatError(SplatPruneError):
    """Checkpoint header or layout is malformed (missing property, bad count...)."""


class UnsupportedEncodingError(PlyFormatError):
    """Checkpoint is ASCII or big-endian."""


class TruncatedPayloadError(SplatPruneError, OSError):
    """Checkpoint payload ends before the declared vertex count is read."""

    def __init__(self, message, offset):
        super().__init__(message)
        self.offset = offset


class DegenerateInputError(SplatPruneError, ValueError):
    pass


class CapacityError(SplatPruneError):
    """Edge count would exceed the configured cap."""


class EmptySelectionError(SplatPruneError, ValueError):
    pass


class ShapeError(SplatPruneError, ValueError):
    pass
