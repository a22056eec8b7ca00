"""Error codes and exception hierarchy shared by every module."""

from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, Optional


class ErrorCode(str, Enum):
    """Standard error codes surfaced in the JSON error envelope."""

    DIMENSION_ERROR = "dimension_error"
    FORMAT_ERROR = "format_error"
    TRUNCATED_STREAM = "truncated_stream"
    SHAPE_OVERFLOW = "shape_overflow"
    PRECISION_LOSS = "precision_loss"
    INVALID_PARAMETER = "invalid_parameter"
    ANNOTATION_ERROR = "annotation_error"
    FIT_DIVERGED = "fit_diverged"
    PLACEMENT_FAILED = "placement_failed"
    CONFIG_ERROR = "config_error"
    VALIDATION_ERROR = "validation_error"
    INTERNAL_ERROR = "internal_error"


class HeatregError(Exception):
    """Base error carrying a code and structured details."""

    code: ErrorCode = ErrorCode.INTERNAL_ERROR

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Render the error envelope written to stderr by the CLI."""
        return {
            "error": {
                "code": self.code.value,
                "message": self.message,
                "details": self.details,
                "timestamp": datetime.now(timezone.utc).isoformat(),
            }
        }


class DimensionError(HeatregError, ValueError):
    """Shapes of two grids or stacks do not agree."""
    code = ErrorCode.DIMENSION_ERROR


class TensorFormatError(HeatregError, ValueError):
    """A tensor dump is malformed."""
    code = ErrorCode.FORMAT_ERROR


class TruncatedStreamError(TensorFormatError):
    """A tensor dump ended before its declared payload."""
    code = ErrorCode.TRUNCATED_STREAM


class ShapeOverflowError(TensorFormatError):
    """A tensor dump declares a shape too large to allocate."""
    code = ErrorCode.SHAPE_OVERFLOW


class PrecisionLossError(TensorFormatError):
    """A stack holds values that the float32 payload cannot represent exactly."""
    code = ErrorCode.PRECISION_LOSS


class InvalidParameterError(HeatregError, ValueError):
    """A scalar parameter is outside its admissible range."""
    code = ErrorCode.INVALID_PARAMETER


class AnnotationError(HeatregError, ValueError):
    """Annotation JSON does not match the expected structure."""
    code = ErrorCode.ANNOTATION_ERROR


class FitDivergedError(HeatregError):
    """The optimizer produced a non-finite loss."""
    code = ErrorCode.FIT_DIVERGED

    def __init__(self, step: int, message: Optional[str] = None):
        super().__init__(
            message or f"Loss became non-finite at step {step}",
            details={"step": step},
        )
        self.step = step


class PlacementError(HeatregError):
    """Synthetic persons could not be placed on the canvas."""
    code = ErrorCode.PLACEMENT_FAILED


class ConfigError(HeatregError, ValueError):
    """Run configuration contains unknown or malformed keys."""
    code = ErrorCode.CONFIG_ERROR
