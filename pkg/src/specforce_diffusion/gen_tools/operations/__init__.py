"""
Operations module for the generation tools.

This module contains the per-command managers and the run manifest.
"""

from .classifier_manager import ClassifierManager, classifier_inputs
from .data_manager import DataManager, write_stats_csv
from .diffusion_manager import DiffusionManager, resolve_labels
from .embedding_manager import EmbeddingManager, RoundtripAudit, audit_signals
from .evaluation_manager import EvaluationManager
from .run_manifest import RunManifest

__all__ = [
    'ClassifierManager',
    'classifier_inputs',
    'DataManager',
    'write_stats_csv',
    'DiffusionManager',
    'resolve_labels',
    'EmbeddingManager',
    'RoundtripAudit',
    'audit_signals',
    'EvaluationManager',
    'RunManifest'
]
