"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class InvalidDataError(ValueError):
    """Input data (label maps, datasets) is out of range or inconsistent."""


class UnsupportedFormatError(ValueError):
    """A file is well-formed but uses a format this package does not accept."""


class MalformedFileError(ValueError):
    """A file could not be decoded."""


class InvalidCheckpointError(ValueError):
    """A checkpoint is corrupt or incompatible with the requested model."""
