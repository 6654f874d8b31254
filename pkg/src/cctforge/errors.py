"""Exception hierarchy shared across the pipeline.

The CLI maps :class:`DataError` to exit code 2 and :class:`NumericError`
to exit code 3.
"""


class CCTForgeError(Exception):
    """Base class for all package errors."""


class DataError(CCTForgeError):
    """Input data could not be parsed or does not satisfy a precondition."""


class RecordParseError(DataError):
    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DiffParseError(DataError):
    pass


class EmptyDiffError(DiffParseError):
    pass


class BinaryPatchError(DiffParseError):
    pass


class ModeChangeOnlyError(DiffParseError):
    pass


class SampleGenerationError(DataError):
    """A pre-training task's precondition does not hold for a record."""


class NumericError(CCTForgeError):
    """Non-finite loss, gradient or parameter encountered during training."""
