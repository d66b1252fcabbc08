"""
Recordings, windows, normalization, splits and the toy generator.
"""

from .preprocessing import (DEFAULT_FRACTIONS, SPLIT_NAMES, STATS_SCOPES, PreprocessResult, hop_size, preprocess,
                            split_dataset, window_offsets, window_recording, windowize)
from .recordings import load_recordings, read_manifest, read_recording, write_recording_csv
from .signals import (CHANNEL_NAMES, DEFAULT_PLACEMENTS, SOURCE_REAL, SOURCE_SYNTHETIC, LabelVocabulary,
                      NormalizationStats, Recording, SignalWindow)
from .toy import TOY_BANDS, band_edges, toy_dataset, toy_recordings, write_toy_recordings

__all__ = [
    'CHANNEL_NAMES',
    'DEFAULT_PLACEMENTS',
    'SOURCE_REAL',
    'SOURCE_SYNTHETIC',
    'LabelVocabulary',
    'NormalizationStats',
    'Recording',
    'SignalWindow',
    'load_recordings',
    'read_manifest',
    'read_recording',
    'write_recording_csv',
    'DEFAULT_FRACTIONS',
    'SPLIT_NAMES',
    'STATS_SCOPES',
    'PreprocessResult',
    'hop_size',
    'preprocess',
    'split_dataset',
    'window_offsets',
    'window_recording',
    'windowize',
    'TOY_BANDS',
    'band_edges',
    'toy_dataset',
    'toy_recordings',
    'write_toy_recordings',
]
