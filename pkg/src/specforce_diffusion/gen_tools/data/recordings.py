"""
Ingestion of CSV recordings listed in a manifest.

Manifest: CSV with header ``file,label,subject``; ``file`` is relative to the
data root. Recording: CSV with header ``t,ax,ay,az`` (seconds, m/s^2).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from ..core.exceptions import DataValidationError
from .signals import LabelVocabulary, Recording

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("file", "label", "subject")
RECORDING_COLUMNS = ("t", "ax", "ay", "az")
RATE_TOLERANCE = 0.01
HEADER_LINES = 1


@dataclass(frozen=True)
class ManifestEntry:
    file: str
    label: int
    subject: str

    @property
    def recording_id(self) -> str:
        return Path(self.file).with_suffix("").as_posix()


def _require_columns(frame: pd.DataFrame, expected, path: Path) -> None:
    missing = [c for c in expected if c not in frame.columns]
    if missing:
        raise DataValidationError(f"{path}: missing columns {missing}; expected header {','.join(expected)}",
                                  details={"path": str(path), "missing": missing})


def read_manifest(path: Union[str, Path], vocabulary: LabelVocabulary) -> List[ManifestEntry]:
    """
    Raises:
        DataValidationError: If the manifest is missing, malformed or names an unknown label
    """
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"Manifest not found: {path}", details={"path": str(path)})
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    _require_columns(frame, MANIFEST_COLUMNS, path)
    entries = []
    for i, row in enumerate(frame.itertuples(index=False)):
        if not row.file:
            raise DataValidationError(f"{path}: empty file name on line {i + 1 + HEADER_LINES}",
                                      details={"path": str(path), "line": i + 1 + HEADER_LINES})
        entries.append(ManifestEntry(file=row.file, label=vocabulary.id_of(row.label), subject=row.subject))
    return entries


def _resample(timestamps: np.ndarray, values: np.ndarray, rate: float):
    grid = np.arange(timestamps[0], timestamps[-1] + 0.5 / rate, 1.0 / rate)
    grid = grid[grid <= timestamps[-1]]
    return grid, np.stack([np.interp(grid, timestamps, values[c]) for c in range(values.shape[0])])


def read_recording(path: Union[str, Path], recording_id: str, label: int, subject: str,
                   sample_rate: float = 200.0, resample: bool = False) -> Recording:
    """
    Parse and validate one ``t,ax,ay,az`` file.

    Raises:
        DataValidationError: Missing file, malformed row, non-increasing timestamps,
            or a sample rate more than 1% away from ``sample_rate`` (unless ``resample``)
    """
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"Recording not found: {path}", details={"path": str(path)})
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    _require_columns(frame, RECORDING_COLUMNS, path)
    numeric = frame[list(RECORDING_COLUMNS)].apply(pd.to_numeric, errors="coerce")
    bad = np.nonzero(~np.isfinite(numeric.to_numpy(dtype=np.float64)).all(axis=1))[0]
    if bad.size:
        line = int(bad[0]) + 1 + HEADER_LINES
        raise DataValidationError(f"{path}: malformed row on line {line}",
                                  details={"path": str(path), "line": line})
    data = numeric.to_numpy(dtype=np.float64)
    timestamps, values = data[:, 0], data[:, 1:].T.copy()
    steps = np.diff(timestamps)
    if np.any(steps <= 0):
        line = int(np.nonzero(steps <= 0)[0][0]) + 2 + HEADER_LINES
        raise DataValidationError(f"{path}: timestamps must be strictly increasing (line {line})",
                                  details={"path": str(path), "line": line})
    if timestamps.size > 1:
        measured = 1.0 / float(np.median(steps))
        if abs(measured - sample_rate) > RATE_TOLERANCE * sample_rate:
            if not resample:
                raise DataValidationError(
                    f"{path}: sample rate {measured:.2f} Hz differs from {sample_rate} Hz by more than 1%",
                    details={"path": str(path), "rate": measured, "expected": sample_rate})
            logger.info(f"Resampling {path} from {measured:.2f} Hz to {sample_rate} Hz")
            timestamps, values = _resample(timestamps, values, sample_rate)
    return Recording(recording_id=recording_id, timestamps=timestamps, values=values, label=label,
                     subject=subject, sample_rate=sample_rate)


def load_recordings(root: Union[str, Path], manifest: Union[str, Path], vocabulary: LabelVocabulary,
                    sample_rate: float = 200.0, resample: bool = False,
                    workers: Optional[int] = None) -> List[Recording]:
    """
    Load every manifest entry; files are parsed in parallel and returned sorted by recording id.
    """
    root = Path(root)
    entries = read_manifest(manifest, vocabulary)
    if not entries:
        raise DataValidationError(f"Manifest {manifest} lists no recordings", details={"path": str(manifest)})

    def load(entry: ManifestEntry) -> Recording:
        return read_recording(root / entry.file, entry.recording_id, entry.label, entry.subject,
                              sample_rate, resample)

    with ThreadPoolExecutor(max_workers=workers or 1) as pool:
        recordings = list(pool.map(load, entries))
    recordings.sort(key=lambda r: r.recording_id)
    logger.info(f"Loaded {len(recordings)} recordings from {manifest}")
    return recordings


def write_recording_csv(path: Union[str, Path], timestamps: np.ndarray, values: np.ndarray) -> None:
    frame = pd.DataFrame({"t": timestamps, "ax": values[0], "ay": values[1], "az": values[2]})
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.9g")
