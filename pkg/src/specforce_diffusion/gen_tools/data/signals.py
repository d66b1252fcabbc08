"""
Domain types for specific-force data: placement vocabulary, recordings,
fixed-length windows and per-channel normalization statistics.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import DataValidationError

CHANNEL_NAMES: Tuple[str, str, str] = ("x", "y", "z")
DEFAULT_PLACEMENTS: Tuple[str, ...] = ("bag", "body", "handheld", "leg")
SOURCE_REAL = "real"
SOURCE_SYNTHETIC = "synthetic"


class LabelVocabulary:
    """Bijective mapping between placement names and integer class ids.

    The default vocabulary is the four RIDI placements with ids 0..3. Other
    datasets can pass their own ordered names; the mapping is persisted with
    every artifact via ``to_metadata``.
    """

    def __init__(self, names: Sequence[str] = DEFAULT_PLACEMENTS):
        cleaned = [str(n).strip() for n in names]
        if len(cleaned) < 2:
            raise DataValidationError("Label vocabulary needs at least two classes",
                                      details={"names": cleaned})
        if len(set(cleaned)) != len(cleaned) or any(not n for n in cleaned):
            raise DataValidationError("Label vocabulary names must be unique and non-empty",
                                      details={"names": cleaned})
        self.names: Tuple[str, ...] = tuple(cleaned)
        self._ids: Dict[str, int] = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocabulary) and self.names == other.names

    def __repr__(self) -> str:
        return f"LabelVocabulary({list(self.names)})"

    def id_of(self, name: str) -> int:
        key = str(name).strip()
        if key not in self._ids:
            raise DataValidationError(
                f"Unknown label '{name}'. Valid labels: {list(self.names)}",
                details={"label": name, "valid": list(self.names)})
        return self._ids[key]

    def name_of(self, label_id: int) -> str:
        if not 0 <= int(label_id) < len(self.names):
            raise DataValidationError(
                f"Label id {label_id} outside vocabulary of size {len(self.names)}",
                details={"label_id": int(label_id), "valid": list(self.names)})
        return self.names[int(label_id)]

    def to_metadata(self) -> str:
        return ",".join(self.names)

    @classmethod
    def from_metadata(cls, text: str) -> "LabelVocabulary":
        return cls([part for part in text.split(",") if part])


@dataclass
class Recording:
    """One tri-axial specific-force recording from a manifest entry."""
    recording_id: str
    timestamps: np.ndarray
    values: np.ndarray
    label: int
    subject: str
    sample_rate: float = 200.0

    def __len__(self) -> int:
        return int(self.values.shape[1])


@dataclass
class SignalWindow:
    """A 3 x L window of specific force with its label and provenance.

    ``recording_id``/``offset`` identify a real window; ``seed`` identifies a
    generated one.
    """
    values: np.ndarray
    label: int
    source: str = SOURCE_REAL
    normalized: bool = False
    recording_id: Optional[str] = None
    offset: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(CHANNEL_NAMES):
            raise DataValidationError(
                f"Signal window must have shape (3, L), got {self.values.shape}",
                details={"shape": list(self.values.shape)})

    @property
    def length(self) -> int:
        return int(self.values.shape[1])

    @property
    def provenance(self) -> str:
        if self.seed is not None:
            return f"seed:{self.seed}"
        return f"{self.recording_id}@{self.offset}"

    def with_values(self, values: np.ndarray, normalized: bool) -> "SignalWindow":
        return replace(self, values=values, normalized=normalized)


@dataclass
class NormalizationStats:
    """Per-channel mean and standard deviation for window normalization."""
    mean: np.ndarray
    std: np.ndarray
    computed_over: str = "train"
    count: int = 0
    channel_names: Tuple[str, ...] = field(default=CHANNEL_NAMES)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.std.shape or self.mean.shape[0] != len(self.channel_names):
            raise DataValidationError("Normalization stats must have one mean and std per channel",
                                      details={"mean": self.mean.tolist(), "std": self.std.tolist()})
        bad = [self.channel_names[i] for i in range(self.std.shape[0])
               if not np.isfinite(self.std[i]) or self.std[i] <= 0.0]
        if bad:
            raise DataValidationError(
                f"Channel standard deviation must be positive, degenerate channels: {bad}",
                details={"channels": bad, "std": self.std.tolist()})

    @classmethod
    def from_windows(cls, windows: List[SignalWindow], computed_over: str) -> "NormalizationStats":
        """Population mean/std per channel over every sample of every window."""
        if not windows:
            raise DataValidationError("Cannot compute normalization stats over zero windows",
                                      details={"computed_over": computed_over})
        stacked = np.concatenate([w.values.astype(np.float64) for w in windows], axis=1)
        return cls(mean=stacked.mean(axis=1), std=stacked.std(axis=1),
                   computed_over=computed_over, count=int(stacked.shape[1]))

    def normalize(self, values: np.ndarray) -> np.ndarray:
        out = (values.astype(np.float64) - self.mean[:, None]) / self.std[:, None]
        return out.astype(values.dtype, copy=False)

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        out = values.astype(np.float64) * self.std[:, None] + self.mean[:, None]
        return out.astype(values.dtype, copy=False)

    def normalize_window(self, window: SignalWindow) -> SignalWindow:
        if window.normalized:
            return window
        return window.with_values(self.normalize(window.values), normalized=True)

    def denormalize_window(self, window: SignalWindow) -> SignalWindow:
        if not window.normalized:
            return window
        return window.with_values(self.denormalize(window.values), normalized=False)
