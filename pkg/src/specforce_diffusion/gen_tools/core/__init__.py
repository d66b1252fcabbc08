"""
Core module for the generation tools.

This module contains the PipelineManager facade and the exception hierarchy.
"""

from .exceptions import (
    SpecforceError,
    ConfigurationError,
    EmbeddingError,
    TensorShapeError,
    NonFiniteError,
    TapeError,
    DataValidationError,
    ContainerFormatError,
    TrainingError,
    EvaluationError
)
from .pipeline_manager import PipelineManager

__all__ = [
    'PipelineManager',
    'SpecforceError',
    'ConfigurationError',
    'EmbeddingError',
    'TensorShapeError',
    'NonFiniteError',
    'TapeError',
    'DataValidationError',
    'ContainerFormatError',
    'TrainingError',
    'EvaluationError'
]
