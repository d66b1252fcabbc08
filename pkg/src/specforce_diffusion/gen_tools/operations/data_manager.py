"""
Data Manager for ingestion, toy data and dataset containers.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

from ..core.exceptions import DataValidationError
from ..data.preprocessing import preprocess
from ..data.recordings import load_recordings
from ..data.signals import CHANNEL_NAMES, NormalizationStats
from ..data.toy import toy_recordings, write_toy_recordings
from ..storage.artifacts import DatasetBundle, dataset_from_container, dataset_to_container
from ..storage.container import read_container, write_container
from .run_manifest import RunManifest

DATASET_FILE = "dataset.idgc"
STATS_FILE = "stats.csv"


def write_stats_csv(path: Union[str, Path], stats: NormalizationStats) -> None:
    frame = pd.DataFrame({"channel": list(CHANNEL_NAMES), "mean": stats.mean, "std": stats.std,
                          "split": stats.computed_over, "count": stats.count})
    frame.to_csv(path, index=False, float_format="%.9g")


class DataManager:
    """Manages dataset ingestion and storage."""

    def __init__(self, config, manifest: RunManifest):
        self.config = config
        self.manifest = manifest
        self.logger = logging.getLogger(__name__)
        self.run_id = manifest.run_id

    def _save(self, result, vocabulary, out_dir: Path, extra: Dict[str, str]) -> Dict[str, Any]:
        out_dir.mkdir(parents=True, exist_ok=True)
        metadata = {"seed": str(self.config.seed), **extra, **self.config.metadata()}
        container = dataset_to_container(result.splits, vocabulary, result.stats, metadata)
        path = out_dir / DATASET_FILE
        self.manifest.add_output(path, write_container(path, container))
        stats_path = out_dir / STATS_FILE
        write_stats_csv(stats_path, result.stats)
        self.manifest.add_output(stats_path)
        counts = {name: len(windows) for name, windows in result.splits.items()}
        self.logger.info(f"[Run ID: {self.run_id}] Dataset written to {path}: {counts}")
        return {"dataset": str(path), "stats": str(stats_path), "windows": counts, "skipped": result.skipped}

    def _preprocess(self, recordings):
        data = self.config.data
        return preprocess(recordings, window=data.window, overlap=data.overlap, drop=data.drop,
                          fractions=data.split, seed=self.config.seed, stats_scope=data.stats_scope)

    def ingest(self, data_root: Optional[Union[str, Path]], manifest_path: Optional[Union[str, Path]],
               out_dir: Union[str, Path]) -> Dict[str, Any]:
        """
        Load the manifest's recordings, preprocess them and write the dataset container plus stats.csv.

        Raises:
            DataValidationError: If paths are missing or recordings fail validation
        """
        data = self.config.data
        data_root = data_root or data.data_root
        manifest_path = manifest_path or data.manifest
        if not manifest_path:
            raise DataValidationError("No manifest given (use --manifest or [data] manifest)")
        manifest_path = Path(manifest_path)
        root = Path(data_root) if data_root else manifest_path.parent
        self.logger.info(f"[Run ID: {self.run_id}] Ingesting {manifest_path} under {root}")
        vocabulary = data.vocabulary()
        recordings = load_recordings(root, manifest_path, vocabulary, data.sample_rate, data.resample,
                                     data.workers)
        self.manifest.add_input(manifest_path)
        result = self._preprocess(recordings)
        summary = self._save(result, vocabulary, Path(out_dir), {"origin": "ingest"})
        summary["recordings"] = len(recordings)
        return summary

    def toy(self, out_dir: Union[str, Path], per_class: Optional[int] = None,
            write_csv: bool = False) -> Dict[str, Any]:
        """Generate toy recordings (one window each), optionally as CSV + manifest, and store them."""
        data = self.config.data
        per_class = per_class or data.toy_per_class
        vocabulary = data.vocabulary()
        out_dir = Path(out_dir)
        recordings = toy_recordings(self.config.seed, per_class, data.window, data.drop, vocabulary)
        self.logger.info(f"[Run ID: {self.run_id}] Generated {len(recordings)} toy recordings")
        summary: Dict[str, Any] = {}
        if write_csv:
            manifest_path = write_toy_recordings(out_dir / "recordings", recordings, vocabulary)
            self.manifest.add_output(manifest_path)
            summary["manifest"] = str(manifest_path)
        result = self._preprocess(recordings)
        summary.update(self._save(result, vocabulary, out_dir, {"origin": "toy", "toy.per_class": str(per_class)}))
        return summary

    def load(self, path: Union[str, Path]) -> DatasetBundle:
        self.manifest.add_input(path)
        bundle = dataset_from_container(read_container(path))
        self.logger.debug(f"[Run ID: {self.run_id}] Loaded dataset {path} with splits {list(bundle.splits)}")
        return bundle
