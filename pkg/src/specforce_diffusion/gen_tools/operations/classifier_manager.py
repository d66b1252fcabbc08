"""
Classifier Manager for training and evaluating the placement classifiers on real data.
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..core.exceptions import ConfigurationError
from ..data.signals import SignalWindow
from ..embedding.delay_embedding import EmbeddingCodec
from ..models.classifiers import VARIANTS, build_classifier
from ..models.training import evaluate_classifier, train_classifier
from ..storage.artifacts import classifier_to_container
from ..storage.container import write_container
from ..tensor.tensor import get_default_dtype
from ..utils.seeding import INIT, derive_rng
from .data_manager import DataManager
from .run_manifest import RunManifest


def classifier_inputs(variant: str, windows: Sequence[SignalWindow], codec: EmbeddingCodec) -> np.ndarray:
    """Normalized windows as images (image variant) or as (N, 3, L) series (signal variant)."""
    if variant == "image":
        return codec.encode(windows).astype(get_default_dtype())
    if not windows:
        return np.zeros((0, 3, codec.params.length), dtype=get_default_dtype())
    return np.stack([w.values for w in windows]).astype(get_default_dtype())


class ClassifierManager:
    """Manages classifier training."""

    def __init__(self, config, manifest: RunManifest, data_manager: DataManager,
                 should_stop: Optional[Callable[[], bool]] = None):
        self.config = config
        self.manifest = manifest
        self.data_manager = data_manager
        self.should_stop = should_stop
        self.logger = logging.getLogger(__name__)
        self.run_id = manifest.run_id

    def train(self, dataset_path: Union[str, Path], variant: str, out_dir: Union[str, Path]) -> Dict[str, Any]:
        """
        Train one variant on the train split with early stopping on the validation split.

        Raises:
            ConfigurationError: On an unknown variant
            DataValidationError: If a class is missing from a split
        """
        if variant not in VARIANTS:
            raise ConfigurationError(f"Unknown classifier variant '{variant}'",
                                     details={"variant": variant, "valid": list(VARIANTS)})
        bundle = self.data_manager.load(dataset_path)
        codec = self.config.embedding.codec()
        settings = self.config.classifier
        splits = {name: [bundle.stats.normalize_window(w) for w in bundle.split(name)]
                  for name in ("train", "val", "test")}
        inputs = {name: classifier_inputs(variant, windows, codec) for name, windows in splits.items()}
        labels = {name: np.array([w.label for w in windows], dtype=np.int64) for name, windows in splits.items()}

        model = build_classifier(settings.classifier_config(variant, len(bundle.vocabulary)),
                                 derive_rng(self.config.seed, INIT, VARIANTS.index(variant)))
        spec = settings.train_spec(tuple(self.config.data.split), self.config.seed,
                                   self.config.engine.nonfinite)
        self.logger.info(f"[Run ID: {self.run_id}] Training {variant} classifier ({model.parameter_count()} "
                         f"parameters) on {inputs['train'].shape[0]} windows")
        result = train_classifier(model, inputs["train"], labels["train"], inputs["val"], labels["val"], spec,
                                  should_stop=self.should_stop, progress=self.config.run.progress)

        summary: Dict[str, Any] = {"variant": variant, "best_epoch": result.best_epoch,
                                   "best_val_loss": result.best_val_loss, "epochs_run": result.epochs_run,
                                   "stop_reason": result.stop_reason}
        if inputs["test"].shape[0]:
            report = evaluate_classifier(model, inputs["test"], labels["test"], "real-test",
                                         bundle.vocabulary.names, settings.batch_size)
            summary["test_accuracy"] = report.accuracy
            self.logger.info(f"[Run ID: {self.run_id}] {variant} classifier real-test accuracy "
                             f"{report.accuracy:.2f}%")

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"classifier_{variant}.idgc"
        metadata = {"seed": str(self.config.seed), "best_epoch": str(result.best_epoch),
                    "epochs_run": str(result.epochs_run), "stop_reason": result.stop_reason,
                    **self.config.metadata()}
        container = classifier_to_container(model, bundle.vocabulary, codec, bundle.stats, result.history, metadata)
        self.manifest.add_output(path, write_container(path, container))
        loss_path = out_dir / f"classifier_{variant}_loss.csv"
        pd.DataFrame(result.history, columns=["epoch", "train_loss", "val_loss"]) \
            .to_csv(loss_path, index=False, float_format="%.9g")
        self.manifest.add_output(loss_path)
        summary.update({"model": str(path), "loss_csv": str(loss_path)})
        return summary
