"""Custom errors and exceptions."""

from typing import List, Optional


class EdgeSqueezeError(Exception):
    """Custom Exception for all errors."""


class ConfigError(EdgeSqueezeError):
    """Error raised when a config file or flag holds an invalid value."""


class NumericalError(EdgeSqueezeError):
    """Error raised when an operation produces NaN or infinite values."""


class ShapeError(EdgeSqueezeError):
    """Error raised when tensor shapes do not fit an operation."""


class GraphValidationError(EdgeSqueezeError):
    """Error raised when an architecture graph fails validation."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        """Initialize."""
        self.diagnostics = diagnostics or []
        if self.diagnostics:
            message = message + ": " + "; ".join(self.diagnostics)
        super().__init__(message)


class PassReappliedError(EdgeSqueezeError):
    """Error raised when a rewrite pass is applied to its own output."""


class CalibrationError(EdgeSqueezeError):
    """Error raised when the squeezed model misses its parameter target."""

    def __init__(self, message: str, achieved: int):
        """Initialize."""
        self.achieved = achieved
        super().__init__(f"{message} (achieved {achieved:,} parameters)")


class CompileError(EdgeSqueezeError):
    """Error raised when a graph can not be materialized into a model."""


class CheckpointError(EdgeSqueezeError):
    """Base error for checkpoint handling."""


class CorruptCheckpointError(CheckpointError):
    """Error raised when a checkpoint file is truncated or malformed."""


class GraphHashMismatchError(CheckpointError):
    """Error raised when a checkpoint belongs to another architecture graph."""


class AnnotationError(EdgeSqueezeError):
    """Error raised when an annotation file can not be parsed or is invalid."""


class TilingError(EdgeSqueezeError):
    """Error raised when an image can not be split into the requested grid."""


class DatasetError(EdgeSqueezeError):
    """Error raised when a dataset (manifest or tile file) is unusable."""


class InsufficientTilesError(DatasetError):
    """Error raised when the source images can not fill the requested dataset."""

    def __init__(self, message: str, achievable: int):
        """Initialize."""
        self.achievable = achievable
        super().__init__(f"{message} (achievable maximum: {achievable})")


class EmptySplitError(DatasetError):
    """Error raised when a requested split holds no tiles."""


class TrainingDivergedError(EdgeSqueezeError):
    """Error raised when training produces a non-finite loss."""

    def __init__(self, epoch: int, batch: int, reason: str):
        """Initialize."""
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"Training diverged at epoch {epoch}, batch {batch}: {reason}")


class SamplerError(EdgeSqueezeError):
    """Error raised on invalid use of the telemetry sampler."""


class OperatorError(EdgeSqueezeError):
    """Error raised when an operator receives invalid attributes."""


class TapeError(EdgeSqueezeError):
    """Error raised when backward is called on a tensor that is not on the tape."""
