"""Exception hierarchy shared by every stamp-id module.

Each family maps to a CLI exit code: usage errors exit with 1, everything
else raised by the pipeline exits with 2.
"""

from typing import Optional


class StampIdError(Exception):
    """Base class for all stamp-id errors."""

    exit_code: int = 2

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.path = path

    def __str__(self) -> str:
        if self.path:
            return f"{self.path}: {self.message}"
        return self.message


class UsageError(StampIdError):
    """Command-line misuse: unknown flag, missing option, bad value."""

    exit_code = 1


# Data / image input

class DataError(StampIdError):
    pass


class ImageNotFoundError(DataError, FileNotFoundError):
    pass


class UnsupportedFormatError(DataError):
    pass


class CorruptImageError(DataError):
    pass


class RootNotFoundError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class ClassTooSmallError(DataError):
    pass


class ManifestError(DataError):
    pass


class OutputWriteError(DataError):
    pass


# Feature extraction

class FeatureError(StampIdError):
    pass


class InvalidConfigError(FeatureError, ValueError):
    pass


class InvalidDimensionsError(FeatureError, ValueError):
    pass


class DimensionNotDivisibleError(FeatureError):
    pass


class RadiusTooLargeError(FeatureError):
    pass


class EmptyInputError(FeatureError):
    pass


# Models

class ModelError(StampIdError):
    pass


class EmptyTrainingSetError(ModelError):
    pass


class LabelOutsideSpaceError(ModelError):
    pass


class InconsistentFeatureDimsError(ModelError):
    pass


class FeatureMismatchError(ModelError):
    pass


class WrongModelKindError(ModelError):
    pass


class KinkTooCloseError(ModelError):
    pass


class ModelFormatError(ModelError):
    pass


class ModelVersionError(ModelFormatError):
    pass


# Evaluation

class EvaluationError(StampIdError):
    pass


class LengthMismatchError(EvaluationError):
    pass


class UnknownLabelError(EvaluationError):
    pass


class EmptyMatrixError(EvaluationError):
    pass
