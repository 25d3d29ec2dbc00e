"""Domain exceptions. Each one derives from the built-in a caller would catch anyway."""


class InvalidInputError(ValueError):
    pass


class DegenerateSceneError(ValueError):
    pass


class InvalidIndexError(IndexError):
    pass


class InvalidConfigError(ValueError):
    pass


class InvalidCutsError(ValueError):
    pass


class UnknownCameraError(LookupError):
    pass


class SplatFormatError(ValueError):
    """Malformed or incomplete splat PLY. `offset` is the byte position of the problem, if known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ColmapFormatError(ValueError):
    pass


class UnsupportedCameraModelError(ColmapFormatError):
    pass


class ColmapConsistencyError(ColmapFormatError):
    pass


class ManifestSchemaError(ValueError):
    def __init__(self, message, version=None):
        super().__init__(f"{message} (manifest version {version})" if version is not None else message)
        self.version = version


class ConditioningError(RuntimeError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


class MergeIntegrityError(RuntimeError):
    pass
