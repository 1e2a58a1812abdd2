"""Exception hierarchy shared across the toolkit.

The CLI maps these onto stable exit codes: ConfigError -> 2,
DataError (and subclasses) -> 3, NumericalAbort -> 4.
"""


class EdgefallError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(EdgefallError):
    """Invalid or inconsistent configuration (bad flag, bad key, bad combination)."""


class DataError(EdgefallError):
    """Problem with input data: parsing, schema, alignment, missing files."""


class ShapeError(EdgefallError):
    """Operands with incompatible shapes."""


class TraceMismatchError(EdgefallError):
    """A forward trace does not belong to the (model, window) it was handed with."""


class ModelLoadError(DataError):
    """Base class for model-file loading failures."""


class VersionMismatchError(ModelLoadError):
    """Model file declares an unsupported format version."""


class TruncatedModelError(ModelLoadError):
    """Model file is truncated or not parseable."""


class ShapeInconsistencyError(ModelLoadError):
    """Model file weight shapes disagree with its declared topology."""


class NumericalAbort(EdgefallError):
    """Training hit a non-finite loss; carries the epoch and batch for diagnosis."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
