# Generation tools package initialization

from .core.exceptions import (
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
from .core.pipeline_manager import PipelineManager
from .embedding.delay_embedding import EmbeddingCodec, EmbeddingParams, embed, invert
from .formatting.report_manager import ReportManager
from .operations.run_manifest import RunManifest
from .utils.log_manager import LogManager, get_log_manager

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
    'EvaluationError',
    'EmbeddingCodec',
    'EmbeddingParams',
    'embed',
    'invert',
    'ReportManager',
    'RunManifest',
    'LogManager',
    'get_log_manager'
]
