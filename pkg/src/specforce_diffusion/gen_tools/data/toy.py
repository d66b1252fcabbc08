"""
Deterministic toy specific-force data.

Class k is a mix of sinusoids whose frequencies fall inside band k (in cycles
per window), with per-channel phase and gain, amplitude jitter and additive
Gaussian noise at 10% of the amplitude. The bands are disjoint, so the
dominant DFT bin of every class-k channel lies inside band k.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.exceptions import DataValidationError
from ..utils.seeding import derive_rng
from .recordings import write_recording_csv
from .signals import CHANNEL_NAMES, DEFAULT_PLACEMENTS, LabelVocabulary, Recording, SignalWindow

logger = logging.getLogger(__name__)

TOY_STREAM = "toy"
TOY_BANDS: Tuple[Tuple[float, float], ...] = ((2.0, 6.0), (10.0, 16.0), (20.0, 28.0), (34.0, 44.0))
CHANNEL_OFFSETS = (0.0, 0.0, 9.81)
NOISE_FRACTION = 0.1
SAMPLE_RATE = 200.0


def band_edges(label: int) -> Tuple[float, float]:
    return TOY_BANDS[label % len(TOY_BANDS)]


def toy_signal(rng: np.random.Generator, label: int, length: int, reference: Optional[int] = None) -> np.ndarray:
    """
    One 3 x ``length`` toy signal of class ``label``.

    Frequencies are in cycles per ``reference`` samples (default ``length``),
    so a long recording keeps the same spectral content per window.
    """
    reference = reference or length
    lo, hi = band_edges(label)
    t = np.arange(length, dtype=np.float64) / reference
    amplitude = rng.uniform(0.8, 1.2)
    freqs = rng.uniform(lo + 0.5, hi - 0.5, size=2)
    weights = np.array([1.0, 0.5])
    out = np.empty((len(CHANNEL_NAMES), length))
    for c in range(len(CHANNEL_NAMES)):
        phases = rng.uniform(0.0, 2.0 * np.pi, size=2)
        gain = rng.uniform(0.8, 1.2)
        clean = (weights[:, None] * np.sin(2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])).sum(axis=0)
        noise = NOISE_FRACTION * amplitude * rng.standard_normal(length)
        out[c] = CHANNEL_OFFSETS[c] + amplitude * gain * clean + noise
    return out


def toy_dataset(seed: int, per_class: int, length: int = 1024,
                vocabulary: Optional[LabelVocabulary] = None) -> List[SignalWindow]:
    """
    Raw (unnormalized) toy windows, ``per_class`` for each class.

    Every window is its own recording group ``toy-<label>-<index>``.
    """
    if per_class < 1:
        raise DataValidationError(f"per_class must be at least 1, got {per_class}", details={"per_class": per_class})
    vocabulary = vocabulary or LabelVocabulary(DEFAULT_PLACEMENTS)
    windows = []
    for label in range(len(vocabulary)):
        rng = derive_rng(seed, TOY_STREAM, label)
        for i in range(per_class):
            windows.append(SignalWindow(values=toy_signal(rng, label, length), label=label,
                                        recording_id=f"toy-{vocabulary.name_of(label)}-{i:05d}", offset=0))
    logger.info(f"Generated {len(windows)} toy windows ({per_class} per class, length {length})")
    return windows


def toy_recordings(seed: int, per_class: int, length: int = 1024, drop: int = 1500,
                   vocabulary: Optional[LabelVocabulary] = None) -> List[Recording]:
    """Toy recordings of ``drop + length`` samples, each yielding exactly one window."""
    vocabulary = vocabulary or LabelVocabulary(DEFAULT_PLACEMENTS)
    recordings = []
    for label in range(len(vocabulary)):
        rng = derive_rng(seed, TOY_STREAM, label)
        for i in range(per_class):
            values = toy_signal(rng, label, drop + length, reference=length)
            timestamps = np.arange(values.shape[1], dtype=np.float64) / SAMPLE_RATE
            recordings.append(Recording(recording_id=f"{vocabulary.name_of(label)}/toy_{i:05d}",
                                        timestamps=timestamps, values=values, label=label,
                                        subject=f"toy-subject-{i % 6}", sample_rate=SAMPLE_RATE))
    return recordings


def write_toy_recordings(root: Union[str, Path], recordings: Sequence[Recording],
                         vocabulary: LabelVocabulary) -> Path:
    """Write recordings as ``t,ax,ay,az`` CSV files plus ``manifest.csv``; returns the manifest path."""
    root = Path(root)
    rows = []
    for rec in recordings:
        name = f"{rec.recording_id}.csv"
        write_recording_csv(root / name, rec.timestamps, rec.values)
        rows.append({"file": name, "label": vocabulary.name_of(rec.label), "subject": rec.subject})
    manifest = root / "manifest.csv"
    pd.DataFrame(rows, columns=["file", "label", "subject"]).to_csv(manifest, index=False)
    return manifest
