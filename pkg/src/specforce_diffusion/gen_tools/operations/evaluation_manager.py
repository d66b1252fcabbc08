"""
Evaluation Manager for the real-vs-synthetic comparison.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Union

from ..core.exceptions import EvaluationError
from ..evaluation.cross_evaluation import cross_evaluate
from ..formatting.report_manager import ReportManager
from ..storage.artifacts import ClassifierCheckpoint, DatasetBundle, classifier_from_container
from ..storage.container import read_container
from .data_manager import DataManager
from .diffusion_manager import SYNTHETIC_SPLIT
from .run_manifest import RunManifest

REAL_SPLIT = "test"


class EvaluationManager:
    """Manages cross-evaluation runs and their report bundles."""

    def __init__(self, config, manifest: RunManifest, data_manager: DataManager):
        self.config = config
        self.manifest = manifest
        self.data_manager = data_manager
        self.logger = logging.getLogger(__name__)
        self.run_id = manifest.run_id

    def _load_classifier(self, path: Union[str, Path], variant: str) -> ClassifierCheckpoint:
        self.manifest.add_input(path)
        checkpoint = classifier_from_container(read_container(path))
        if checkpoint.variant != variant:
            raise EvaluationError(f"{path} holds a {checkpoint.variant} classifier, expected {variant}",
                                  details={"path": str(path), "variant": checkpoint.variant})
        return checkpoint

    @staticmethod
    def _evaluation_windows(bundle: DatasetBundle):
        """The synthetic split when present, otherwise the real test split."""
        name = SYNTHETIC_SPLIT if SYNTHETIC_SPLIT in bundle.splits else REAL_SPLIT
        return bundle.split(name)

    def evaluate(self, real_path: Union[str, Path], synthetic_path: Union[str, Path],
                 image_model: Union[str, Path], signal_model: Union[str, Path],
                 out_dir: Union[str, Path]) -> Dict[str, Any]:
        """
        Evaluate both classifiers on the real test split and on the synthetic windows, then write the report.

        Raises:
            EvaluationError: If models and data disagree on vocabulary, or a model file holds the wrong variant
        """
        image = self._load_classifier(image_model, "image")
        signal = self._load_classifier(signal_model, "signal")
        real = self.data_manager.load(real_path)
        synthetic = self.data_manager.load(synthetic_path)
        for name, vocabulary in (("signal model", signal.vocabulary), ("real data", real.vocabulary),
                                 ("synthetic data", synthetic.vocabulary)):
            if vocabulary != image.vocabulary:
                raise EvaluationError(f"The {name} vocabulary differs from the image model's",
                                      details={"expected": list(image.vocabulary.names),
                                               "found": list(vocabulary.names)})

        self.logger.info(f"[Run ID: {self.run_id}] Cross-evaluating {real_path} against {synthetic_path}")
        report = cross_evaluate(real.split(REAL_SPLIT), self._evaluation_windows(synthetic), image.model,
                                signal.model, image.codec, image.stats, image.vocabulary,
                                self.config.evaluation.cross_evaluation_config(self.config.seed))
        written = ReportManager(image.vocabulary.names).write_bundle(report, image.stats, out_dir)
        for path in written:
            self.manifest.add_output(path)
        return {"report_dir": str(out_dir), "fid": report.fid.score,
                "accuracy": {variant: {tag: rep.accuracy for tag, rep in reports.items()}
                             for variant, reports in report.classification.items()},
                "gap": {variant: report.gap(variant) for variant in report.classification}}
