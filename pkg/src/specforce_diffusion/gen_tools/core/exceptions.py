"""
Custom exceptions for the generation tools.
"""

import uuid
from typing import Optional, Any, Dict

from ..utils.log_manager import get_log_manager


class SpecforceError(Exception):
    """Base exception class for the generation tools with enhanced error information."""

    def __init__(self, message: str, error_code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        self.run_id = str(uuid.uuid4())
        self._save_error_log()

    def __str__(self):
        base_msg = f"[Run ID: {self.run_id}] {self.message}"
        if self.error_code:
            base_msg = f"[{self.error_code}] {base_msg}"
        return base_msg

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for serialization."""
        return {
            "error_type": self.__class__.__name__,
            "message": self.message,
            "error_code": self.error_code,
            "run_id": self.run_id,
            "details": self.details
        }

    def _save_error_log(self):
        """Persist the error record when an error-log directory is configured."""
        get_log_manager().save_error_log(self.__class__.__name__, {
            "message": self.message,
            "error_code": self.error_code,
            "run_id": self.run_id,
            "details": self.details
        })


class ConfigurationError(SpecforceError):
    """Raised when the run configuration is invalid."""
    def __init__(self, message: str, error_code: Optional[str] = "CONFIG_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)


class EmbeddingError(SpecforceError):
    """Raised when a delay embedding or its inversion cannot be performed."""
    def __init__(self, message: str, error_code: Optional[str] = "EMBED_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)


class TensorShapeError(SpecforceError):
    """Raised when a tensor primitive receives operands of incompatible shape."""
    def __init__(self, message: str, error_code: Optional[str] = "SHAPE_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)


class NonFiniteError(SpecforceError):
    """Raised when a NaN or infinity shows up where a trap is configured."""
    def __init__(self, message: str, error_code: Optional[str] = "NONFINITE_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)


class TapeError(SpecforceError):
    """Raised when a gradient tape is replayed against the wrong loss or parameters."""
    def __init__(self, message: str, error_code: Optional[str] = "TAPE_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)


class DataValidationError(SpecforceError):
    """Raised when recordings, manifests or windows fail validation."""
    def __init__(self, message: str, error_code: Optional[str] = "DATA_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)


class ContainerFormatError(SpecforceError):
    """Raised when a binary tensor container is malformed or has an unknown version."""
    def __init__(self, message: str, error_code: Optional[str] = "CONTAINER_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)


class TrainingError(SpecforceError):
    """Raised when a training run cannot start or diverges."""
    def __init__(self, message: str, error_code: Optional[str] = "TRAIN_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)


class EvaluationError(SpecforceError):
    """Raised when a metric or report cannot be computed."""
    def __init__(self, message: str, error_code: Optional[str] = "EVAL_ERROR", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, error_code, details)
