"""
Windowing, grouped stratified splitting and normalization of recordings.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..core.exceptions import DataValidationError
from ..utils.seeding import SPLIT, derive_rng
from .signals import NormalizationStats, Recording, SignalWindow

logger = logging.getLogger(__name__)

SPLIT_NAMES: Tuple[str, str, str] = ("train", "val", "test")
DEFAULT_FRACTIONS: Tuple[float, float, float] = (0.7, 0.15, 0.15)
STATS_SCOPES = ("train", "all")


def hop_size(window: int, overlap: float) -> int:
    if window <= 0:
        raise DataValidationError(f"Window length must be positive, got {window}", details={"window": window})
    if not 0.0 <= overlap < 1.0:
        raise DataValidationError(f"Overlap must lie in [0, 1), got {overlap}", details={"overlap": overlap})
    return max(int(round(window * (1.0 - overlap))), 1)


def window_offsets(length: int, window: int, hop: int, drop: int = 0) -> np.ndarray:
    """
    Start offsets (relative to the first kept sample) of every full window.

    ``floor((length - drop - window) / hop) + 1`` windows, or none if the
    recording is shorter than ``drop + window``.
    """
    usable = length - drop
    if usable < window:
        return np.empty((0,), dtype=np.int64)
    return np.arange(0, usable - window + 1, hop, dtype=np.int64)


def windowize(values: np.ndarray, window: int, hop: int, drop: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Slice a (C, T) signal into overlapping (N, C, window) windows.

    Returns:
        windows and their start offsets after the dropped prefix
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise DataValidationError(f"Expected a (C, T) signal, got shape {values.shape}",
                                  details={"shape": list(values.shape)})
    offsets = window_offsets(values.shape[1], window, hop, drop)
    if offsets.size == 0:
        return np.empty((0, values.shape[0], window), dtype=values.dtype), offsets
    kept = values[:, drop:]
    return np.stack([kept[:, o:o + window] for o in offsets]), offsets


def window_recording(recording: Recording, window: int = 1024, overlap: float = 0.5,
                     drop: int = 1500) -> List[SignalWindow]:
    windows, offsets = windowize(recording.values, window, hop_size(window, overlap), drop)
    return [SignalWindow(values=w.copy(), label=recording.label, recording_id=recording.recording_id,
                         offset=int(o)) for w, o in zip(windows, offsets)]


def _group_key(window: SignalWindow) -> str:
    return window.recording_id if window.recording_id is not None else window.provenance


def split_targets(total: int, fractions: Sequence[float]) -> List[int]:
    train = int(round(fractions[0] * total))
    val = int(round(fractions[1] * total))
    return [train, val, max(total - train - val, 0)]


def split_dataset(windows: Sequence[SignalWindow], fractions: Sequence[float] = DEFAULT_FRACTIONS,
                  seed: int = 0) -> Dict[str, List[SignalWindow]]:
    """
    Grouped, stratified train/val/test split.

    Windows are grouped by recording id, so overlapping windows of one
    recording always land in the same split. Per class, the groups are
    shuffled with the split stream and each goes to the split with the
    largest remaining window deficit (ties resolved train, val, test).

    Raises:
        DataValidationError: If fractions are invalid or a class has fewer than three groups
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0.0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataValidationError(f"Split fractions must be three positive values summing to 1, got {fractions}",
                                  details={"fractions": list(fractions)})
    by_label: Dict[int, Dict[str, List[SignalWindow]]] = defaultdict(lambda: defaultdict(list))
    for w in windows:
        by_label[w.label][_group_key(w)].append(w)

    splits: Dict[str, List[SignalWindow]] = {name: [] for name in SPLIT_NAMES}
    for label in sorted(by_label):
        groups = by_label[label]
        if len(groups) < len(SPLIT_NAMES):
            raise DataValidationError(
                f"Class {label} has {len(groups)} recording group(s); at least 3 are needed to stratify",
                details={"label": int(label), "groups": len(groups)})
        keys = sorted(groups)
        order = derive_rng(seed, SPLIT, int(label)).permutation(len(keys))
        targets = split_targets(sum(len(g) for g in groups.values()), fractions)
        filled = [0, 0, 0]
        for idx in order:
            deficits = [t - f for t, f in zip(targets, filled)]
            slot = int(np.argmax(deficits))
            members = groups[keys[idx]]
            splits[SPLIT_NAMES[slot]].extend(members)
            filled[slot] += len(members)
        logger.debug(f"Class {label}: split window counts {filled} for targets {targets}")
    for name in SPLIT_NAMES:
        splits[name].sort(key=lambda w: (w.label, _group_key(w), w.offset or 0))
    return splits


@dataclass
class PreprocessResult:
    """Normalized windows per split plus the stats that produced them."""
    splits: Dict[str, List[SignalWindow]]
    stats: NormalizationStats
    skipped: List[str] = field(default_factory=list)

    @property
    def windows(self) -> List[SignalWindow]:
        return [w for name in SPLIT_NAMES for w in self.splits[name]]


def preprocess(recordings: Sequence[Recording], window: int = 1024, overlap: float = 0.5, drop: int = 1500,
               fractions: Sequence[float] = DEFAULT_FRACTIONS, seed: int = 0,
               stats_scope: str = "train") -> PreprocessResult:
    """
    Drop the leading samples, window each recording, split, then normalize.

    Stats come from the training split unless ``stats_scope == "all"``.
    Recordings shorter than ``drop + window`` are skipped with a warning.

    Raises:
        DataValidationError: No usable recording, bad scope, degenerate channel, or split failure
    """
    if stats_scope not in STATS_SCOPES:
        raise DataValidationError(f"Unknown stats scope '{stats_scope}'; valid: {list(STATS_SCOPES)}",
                                  details={"stats_scope": stats_scope})
    windows: List[SignalWindow] = []
    skipped: List[str] = []
    for rec in sorted(recordings, key=lambda r: r.recording_id):
        if len(rec) < drop + window:
            logger.warning(f"Skipping recording {rec.recording_id}: {len(rec)} samples < drop + window "
                           f"({drop + window})")
            skipped.append(rec.recording_id)
            continue
        windows.extend(window_recording(rec, window, overlap, drop))
    if not windows:
        raise DataValidationError("No recording is long enough to yield a window",
                                  details={"skipped": skipped, "required": drop + window})
    splits = split_dataset(windows, fractions, seed)
    basis = splits["train"] if stats_scope == "train" else windows
    stats = NormalizationStats.from_windows(basis, computed_over=stats_scope)
    normalized = {name: [stats.normalize_window(w) for w in members] for name, members in splits.items()}
    logger.info(f"Preprocessed {len(windows)} windows from {len(recordings) - len(skipped)} recordings "
                f"({len(skipped)} skipped): " + ", ".join(f"{k}={len(v)}" for k, v in normalized.items()))
    return PreprocessResult(splits=normalized, stats=stats, skipped=skipped)
