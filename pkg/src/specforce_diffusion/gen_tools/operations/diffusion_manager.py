"""
Diffusion Manager for denoiser training, resumption and generation.
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from ..core.exceptions import ConfigurationError, DataValidationError
from ..data.recordings import write_recording_csv
from ..data.signals import SOURCE_SYNTHETIC, LabelVocabulary, NormalizationStats
from ..diffusion.generation import generate_signals, item_seeds
from ..diffusion.training import train_denoiser
from ..embedding.delay_embedding import EmbeddingCodec
from ..models.denoiser import DenoiserModel
from ..storage.artifacts import (DenoiserCheckpoint, dataset_to_container, denoiser_from_container,
                                 denoiser_to_container)
from ..storage.container import read_container, write_container
from ..tensor.optim import OptimizerState
from ..tensor.tensor import get_default_dtype
from ..utils.seeding import INIT, SAMPLER, derive_rng
from .data_manager import DataManager
from .run_manifest import RunManifest

MODEL_FILE = "denoiser.idgc"
LOSS_FILE = "diffusion_loss.csv"
SYNTHETIC_FILE = "synthetic.idgc"
SYNTHETIC_SPLIT = "synthetic"
LABEL_ALL = "all"
LABEL_RANDOM = "random"
RANDOM_LABEL_STREAM = 1


def resolve_labels(label: str, count: int, vocabulary: LabelVocabulary, seed: int) -> np.ndarray:
    """
    Conditioning labels for ``count`` items.

    ``all`` cycles through the vocabulary (round-robin), ``random`` draws
    uniformly with the sampler stream, any other value must be a class name.
    """
    if count < 0:
        raise DataValidationError(f"Count must not be negative, got {count}", details={"count": count})
    if label == LABEL_ALL:
        return np.arange(count, dtype=np.int64) % len(vocabulary)
    if label == LABEL_RANDOM:
        return derive_rng(seed, SAMPLER, RANDOM_LABEL_STREAM).integers(0, len(vocabulary), size=count)
    return np.full(count, vocabulary.id_of(label), dtype=np.int64)


class DiffusionManager:
    """Manages denoiser training and sampling."""

    def __init__(self, config, manifest: RunManifest, data_manager: DataManager,
                 should_stop: Optional[Callable[[], bool]] = None):
        self.config = config
        self.manifest = manifest
        self.data_manager = data_manager
        self.should_stop = should_stop
        self.logger = logging.getLogger(__name__)
        self.run_id = manifest.run_id

    def _write_checkpoint(self, path: Path, model: DenoiserModel, codec: EmbeddingCodec, stats: NormalizationStats,
                          epoch: int, history: List[float], state: OptimizerState) -> None:
        container = denoiser_to_container(model, codec, stats, epoch, history, state,
                                          {"seed": str(self.config.seed), **self.config.metadata()})
        self.manifest.add_output(path, write_container(path, container))

    def _check_resume(self, checkpoint: DenoiserCheckpoint, vocabulary: LabelVocabulary,
                      codec: EmbeddingCodec) -> None:
        if checkpoint.model.vocabulary != vocabulary:
            raise ConfigurationError("Checkpoint vocabulary differs from the dataset's",
                                     details={"checkpoint": list(checkpoint.model.vocabulary.names),
                                              "dataset": list(vocabulary.names)})
        if checkpoint.codec.image_shape != codec.image_shape:
            raise ConfigurationError("Checkpoint image shape differs from the configured embedding",
                                     details={"checkpoint": list(checkpoint.codec.image_shape),
                                              "configured": list(codec.image_shape)})

    def train(self, dataset_path: Union[str, Path], out_dir: Union[str, Path],
              resume: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """
        Train (or resume) the denoiser on the training split; writes checkpoints and the loss CSV.

        Raises:
            ConfigurationError: If the resumed checkpoint does not match the dataset or embedding
            TrainingError: If training fails
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        bundle = self.data_manager.load(dataset_path)
        codec = self.config.embedding.codec()
        windows = [bundle.stats.normalize_window(w) for w in bundle.split("train")]
        images = codec.encode(windows)
        labels = np.array([w.label for w in windows], dtype=np.int64)
        settings = self.config.diffusion
        train_config = settings.train_config(self.config.seed, self.config.engine.nonfinite)

        start_epoch, history, state = 0, [], None
        if resume:
            self.manifest.add_input(resume)
            checkpoint = denoiser_from_container(read_container(resume))
            self._check_resume(checkpoint, bundle.vocabulary, codec)
            model = checkpoint.model
            start_epoch, history, state = checkpoint.epoch, checkpoint.history, checkpoint.optimizer_state
            self.logger.info(f"[Run ID: {self.run_id}] Resuming from {resume} at epoch {start_epoch} "
                             f"(optimizer step {state.step if state else 0})")
        else:
            backbone = self.config.backbone.backbone_config(len(bundle.vocabulary), codec.image_shape)
            model = DenoiserModel(backbone, bundle.vocabulary, derive_rng(self.config.seed, INIT),
                                  sigma_data=settings.sigma_data)
        self.logger.info(f"[Run ID: {self.run_id}] Training denoiser ({model.parameter_count()} parameters) "
                         f"on {images.shape[0]} images of shape {codec.image_shape}")

        checkpoint_dir = out_dir / "checkpoints"

        def on_checkpoint(epoch, model, state, history):
            self._write_checkpoint(checkpoint_dir / f"denoiser_epoch_{epoch:05d}.idgc", model, codec,
                                   bundle.stats, epoch, history, state)

        result = train_denoiser(model, images.astype(get_default_dtype()), labels, train_config,
                                settings.noise_distribution(), optimizer_state=state, start_epoch=start_epoch,
                                history=history, on_checkpoint=on_checkpoint, should_stop=self.should_stop,
                                progress=self.config.run.progress)
        model_path = out_dir / MODEL_FILE
        self._write_checkpoint(model_path, model, codec, bundle.stats, result.epochs_completed, result.history,
                               result.optimizer_state)
        loss_path = out_dir / LOSS_FILE
        pd.DataFrame({"epoch": np.arange(1, len(result.history) + 1), "mean_loss": result.history}) \
            .to_csv(loss_path, index=False, float_format="%.9g")
        self.manifest.add_output(loss_path)
        self.logger.info(f"[Run ID: {self.run_id}] Denoiser saved to {model_path} after "
                         f"{result.epochs_completed} epochs")
        return {"model": str(model_path), "loss_csv": str(loss_path), "epochs": result.epochs_completed,
                "stopped_early": result.stopped_early,
                "optimizer_step": result.optimizer_state.step if result.optimizer_state else 0,
                "final_loss": result.history[-1] if result.history else None}

    def generate(self, model_path: Union[str, Path], label: str, count: int, out_dir: Union[str, Path],
                 seed: Optional[int] = None, export_csv: bool = False) -> Dict[str, Any]:
        """
        Sample ``count`` windows and store them as a ``synthetic`` split (raw scale).

        Raises:
            DataValidationError: On an unknown label or a negative count
        """
        seed = self.config.seed if seed is None else seed
        self.manifest.add_input(model_path)
        checkpoint = denoiser_from_container(read_container(model_path))
        vocabulary = checkpoint.model.vocabulary
        labels = resolve_labels(label, count, vocabulary, seed)
        seeds = item_seeds(seed, count)
        self.logger.info(f"[Run ID: {self.run_id}] Generating {count} windows (label '{label}', seed {seed})")
        settings = self.config.diffusion
        windows = generate_signals(checkpoint.model, labels, seeds, checkpoint.stats, checkpoint.codec,
                                   settings.sampler(), batch_size=settings.sample_batch_size)

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / SYNTHETIC_FILE
        container = dataset_to_container({SYNTHETIC_SPLIT: windows}, vocabulary, checkpoint.stats,
                                         {"seed": str(seed), "label": label, "source": SOURCE_SYNTHETIC,
                                          **self.config.metadata()})
        self.manifest.add_output(path, write_container(path, container))
        summary: Dict[str, Any] = {"synthetic": str(path), "count": count,
                                   "per_class": {vocabulary.name_of(k): int(np.sum(labels == k))
                                                 for k in range(len(vocabulary))}}
        if export_csv:
            summary["csv_manifest"] = str(self._export_csv(out_dir / "csv", windows, vocabulary))
        return summary

    def _export_csv(self, root: Path, windows, vocabulary: LabelVocabulary) -> Path:
        rate = self.config.data.sample_rate
        rows = []
        for i, window in enumerate(windows):
            name = f"{vocabulary.name_of(window.label)}/synthetic_{i:05d}.csv"
            timestamps = np.arange(window.length, dtype=np.float64) / rate
            write_recording_csv(root / name, timestamps, window.values)
            rows.append({"file": name, "label": vocabulary.name_of(window.label), "subject": f"seed-{window.seed}"})
        manifest = root / "manifest.csv"
        pd.DataFrame(rows, columns=["file", "label", "subject"]).to_csv(manifest, index=False)
        self.manifest.add_output(manifest)
        self.logger.info(f"[Run ID: {self.run_id}] Exported {len(rows)} synthetic windows as CSV under {root}")
        return manifest
