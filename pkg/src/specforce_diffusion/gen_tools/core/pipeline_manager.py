"""
Pipeline Manager: one entry point for every pipeline command.

This module provides a facade that prepares the engine for a run (dtype,
non-finite trap, error-record directory), owns the run manifest and
delegates each command to the specialised manager for ingestion,
diffusion, classifiers, evaluation or the embedding audit.
"""

import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Dict, Optional, Union

from ..operations.classifier_manager import ClassifierManager
from ..operations.data_manager import DataManager
from ..operations.diffusion_manager import DiffusionManager
from ..operations.embedding_manager import EmbeddingManager, RoundtripAudit
from ..operations.evaluation_manager import EvaluationManager
from ..operations.run_manifest import RunManifest
from ..tensor.tensor import set_default_dtype, set_nonfinite_trap
from ..utils.log_manager import get_log_manager
from .exceptions import SpecforceError

if TYPE_CHECKING:
    from ...config.config_manager import RunConfigManager

PathLike = Union[str, Path]


class PipelineManager:
    """Coordinates the managers of one command.

    - DataManager: ingestion, toy data, dataset containers
    - DiffusionManager: denoiser training and generation
    - ClassifierManager: classifier training
    - EvaluationManager: cross-evaluation and report bundle
    - EmbeddingManager: round-trip audit
    """

    def __init__(self, config: "RunConfigManager", command: str, out_dir: PathLike,
                 should_stop: Optional[Callable[[], bool]] = None):
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.manifest = RunManifest(command, config.effective_config(), out_dir)
        self.run_id = self.manifest.run_id
        self._prepare_engine()
        self.data_manager = DataManager(config, self.manifest)
        self.diffusion_manager = DiffusionManager(config, self.manifest, self.data_manager, should_stop)
        self.classifier_manager = ClassifierManager(config, self.manifest, self.data_manager, should_stop)
        self.evaluation_manager = EvaluationManager(config, self.manifest, self.data_manager)
        self.embedding_manager = EmbeddingManager(config, self.manifest, self.data_manager)

    def _prepare_engine(self) -> None:
        set_default_dtype(self.config.engine.dtype)
        set_nonfinite_trap(self.config.engine.nonfinite == "trap")
        get_log_manager().configure(self.config.run.error_log_dir or None)
        self.logger.info(f"[Run ID: {self.run_id}] Command '{self.manifest.command}' "
                         f"(seed {self.config.seed}, {self.config.engine.dtype})")

    def _run(self, operation: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
        try:
            summary = operation()
        except SpecforceError as e:
            self.manifest.status = "failed"
            self.manifest.error = e.to_dict()
            raise
        except Exception as e:
            self.manifest.status = "failed"
            self.manifest.error = {"error_code": "INTERNAL", "message": str(e)}
            raise
        self.manifest.summary = summary
        self.manifest.status = "interrupted" if summary.get("stopped_early") else "completed"
        return summary

    def write_manifest(self) -> Path:
        return self.manifest.write()

    def ingest(self, data_root: Optional[PathLike], manifest: Optional[PathLike]) -> Dict[str, Any]:
        return self._run(lambda: self.data_manager.ingest(data_root, manifest, self.manifest.out_dir))

    def toy_data(self, per_class: Optional[int] = None, write_csv: bool = False) -> Dict[str, Any]:
        return self._run(lambda: self.data_manager.toy(self.manifest.out_dir, per_class, write_csv))

    def train_diffusion(self, dataset: PathLike, resume: Optional[PathLike] = None) -> Dict[str, Any]:
        return self._run(lambda: self.diffusion_manager.train(dataset, self.manifest.out_dir, resume))

    def train_classifier(self, dataset: PathLike, variant: str) -> Dict[str, Any]:
        return self._run(lambda: self.classifier_manager.train(dataset, variant, self.manifest.out_dir))

    def generate(self, model: PathLike, label: str, count: int, seed: Optional[int] = None,
                 export_csv: bool = False) -> Dict[str, Any]:
        return self._run(lambda: self.diffusion_manager.generate(model, label, count, self.manifest.out_dir,
                                                                 seed, export_csv))

    def evaluate(self, real: PathLike, synthetic: PathLike, image_model: PathLike,
                 signal_model: PathLike) -> Dict[str, Any]:
        return self._run(lambda: self.evaluation_manager.evaluate(real, synthetic, image_model, signal_model,
                                                                  self.manifest.out_dir))

    def roundtrip_check(self, dataset: Optional[PathLike] = None, length: Optional[int] = None,
                        m: Optional[int] = None, n: Optional[int] = None, count: int = 1000,
                        corrupt: bool = False) -> RoundtripAudit:
        holder = {}

        def operation() -> Dict[str, Any]:
            holder["audit"] = self.embedding_manager.roundtrip_check(dataset, length, m, n, count, corrupt)
            return holder["audit"].to_dict()

        self._run(operation)
        return holder["audit"]
