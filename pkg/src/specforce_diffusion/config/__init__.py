from .config_manager import (DEFAULT_CONFIG_PATH, SCHEMA, BackboneSettings, ClassifierSettings, ConfigValidationError,
                             DataSettings, DiffusionSettings, EmbeddingSettings, EngineSettings, EvaluationSettings,
                             RunConfigManager, RunSettings)

__all__ = [
    'DEFAULT_CONFIG_PATH',
    'SCHEMA',
    'BackboneSettings',
    'ClassifierSettings',
    'ConfigValidationError',
    'DataSettings',
    'DiffusionSettings',
    'EmbeddingSettings',
    'EngineSettings',
    'EvaluationSettings',
    'RunConfigManager',
    'RunSettings',
]
