"""
Real-vs-synthetic cross-evaluation with the two placement classifiers.

Classifiers trained on real data only are evaluated on the real test split and
on synthetic windows; the accuracy gap measures how useful the synthetic data
is. The report also carries the feature-space Frechet distance, per-channel
PDF comparisons and optional t-SNE coordinates.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.exceptions import EvaluationError
from ..data.signals import CHANNEL_NAMES, SOURCE_REAL, SOURCE_SYNTHETIC, LabelVocabulary, NormalizationStats, SignalWindow
from ..embedding.delay_embedding import EmbeddingCodec
from ..models.classifiers import PlacementClassifier
from ..models.training import ClassificationReport, evaluate_classifier
from ..tensor.tensor import Tensor, get_default_dtype
from ..utils.seeding import TSNE, derive_rng
from .metrics import SHRINKAGE, FeatureSet, GaussianFit, PdfComparison, fit_gaussian, frechet_distance, pdf_compare
from .tsne import TsneConfig, tsne

logger = logging.getLogger(__name__)

TAG_REAL = "real-test"
TAG_SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class CrossEvaluationConfig:
    bins: int = 100
    tsne: Optional[TsneConfig] = field(default_factory=TsneConfig)
    tsne_points: int = 1000
    per_channel_tsne: bool = True
    shrinkage: Optional[float] = SHRINKAGE
    batch_size: int = 256


@dataclass
class TsneCoordinates:
    coords: np.ndarray
    sources: List[str]
    labels: np.ndarray
    jittered: bool = False


@dataclass
class FidResult:
    score: float
    real: GaussianFit
    synthetic: GaussianFit

    @property
    def shrinkage_applied(self) -> bool:
        return bool(self.real.shrinkage or self.synthetic.shrinkage)


@dataclass
class EvaluationReport:
    """Everything one real-vs-synthetic comparison produces."""
    class_names: Sequence[str]
    classification: Dict[str, Dict[str, ClassificationReport]]
    fid: FidResult
    pdfs: Dict[str, PdfComparison]
    tsne: Optional[TsneCoordinates] = None
    tsne_channels: Dict[str, TsneCoordinates] = field(default_factory=dict)

    def accuracy(self, variant: str, tag: str) -> float:
        return self.classification[variant][tag].accuracy

    def gap(self, variant: str) -> float:
        """Real-test accuracy minus synthetic accuracy, in percentage points."""
        return self.accuracy(variant, TAG_REAL) - self.accuracy(variant, TAG_SYNTHETIC)


def extract_features(classifier: PlacementClassifier, images: np.ndarray, source: str,
                     labels: Optional[np.ndarray] = None, batch_size: int = 256) -> FeatureSet:
    """Penultimate-layer activations of the image classifier, eval mode."""
    expected = classifier.config.in_channels
    if images.ndim != 4 or images.shape[1] != expected:
        raise EvaluationError(f"Feature extractor expects (N, {expected}, H, W) images, got {images.shape}",
                              details={"shape": list(images.shape)})
    was_training = classifier.training
    classifier.eval()
    try:
        rows = [classifier.features(Tensor(images[i:i + batch_size].astype(get_default_dtype()))).data
                for i in range(0, images.shape[0], batch_size)]
    finally:
        classifier.train(was_training)
    matrix = np.concatenate(rows, axis=0) if rows else np.zeros((0, classifier.config.hidden))
    return FeatureSet(matrix=matrix, source=source, labels=labels)


def fid_score(real_images: np.ndarray, synthetic_images: np.ndarray, extractor: PlacementClassifier,
              shrinkage: Optional[float] = SHRINKAGE, batch_size: int = 256) -> FidResult:
    """Frechet distance between Gaussian fits of the extractor features of both image sets."""
    real = fit_gaussian(extract_features(extractor, real_images, SOURCE_REAL, batch_size=batch_size).matrix,
                        shrinkage)
    synth = fit_gaussian(extract_features(extractor, synthetic_images, SOURCE_SYNTHETIC,
                                          batch_size=batch_size).matrix, shrinkage)
    return FidResult(score=frechet_distance(real, synth), real=real, synthetic=synth)


def _subsample(count: int, limit: int, rng: np.random.Generator) -> np.ndarray:
    if count <= limit:
        return np.arange(count)
    return np.sort(rng.choice(count, size=limit, replace=False))


def _joint_tsne(real: np.ndarray, synth: np.ndarray, real_labels: np.ndarray, synth_labels: np.ndarray,
                config: TsneConfig, limit: int, stream: int) -> TsneCoordinates:
    rng = derive_rng(config.seed, TSNE, stream)
    half = max(limit // 2, 1)
    ri = _subsample(real.shape[0], half, rng)
    si = _subsample(synth.shape[0], half, rng)
    points = np.concatenate([real[ri], synth[si]], axis=0)
    ceiling = (points.shape[0] - 1) / 3.0
    if 1.0 < ceiling <= config.perplexity:
        capped = float(np.nextafter(ceiling, 0.0))
        logger.warning(f"Perplexity {config.perplexity} is infeasible for {points.shape[0]} points; "
                       f"using {capped:.3f}")
        config = replace(config, perplexity=capped)
    result = tsne(points, config)
    return TsneCoordinates(coords=result.coords,
                           sources=[SOURCE_REAL] * len(ri) + [SOURCE_SYNTHETIC] * len(si),
                           labels=np.concatenate([real_labels[ri], synth_labels[si]]),
                           jittered=result.jittered)


def _stack(windows: Sequence[SignalWindow]) -> np.ndarray:
    return np.stack([w.values for w in windows]).astype(get_default_dtype())


def cross_evaluate(real_test: Sequence[SignalWindow], synthetic: Sequence[SignalWindow],
                   image_classifier: PlacementClassifier, signal_classifier: PlacementClassifier,
                   codec: EmbeddingCodec, stats: NormalizationStats, vocabulary: LabelVocabulary,
                   config: CrossEvaluationConfig = CrossEvaluationConfig()) -> EvaluationReport:
    """
    Run the dual-classifier comparison.

    Windows in raw scale are normalized with ``stats`` first, so real and
    synthetic inputs may come in either scale. PDFs compare raw-scale values.

    Raises:
        EvaluationError: If either window set is empty
    """
    if not real_test or not synthetic:
        raise EvaluationError("Cross-evaluation needs non-empty real and synthetic sets",
                              details={"real": len(real_test), "synthetic": len(synthetic)})
    real_norm = [stats.normalize_window(w) for w in real_test]
    synth_norm = [stats.normalize_window(w) for w in synthetic]
    real_y = np.array([w.label for w in real_norm], dtype=np.int64)
    synth_y = np.array([w.label for w in synth_norm], dtype=np.int64)
    real_signals, synth_signals = _stack(real_norm), _stack(synth_norm)
    real_images = codec.encode(real_norm).astype(get_default_dtype())
    synth_images = codec.encode(synth_norm).astype(get_default_dtype())

    names = tuple(vocabulary.names)
    classification = {
        "image": {
            TAG_REAL: evaluate_classifier(image_classifier, real_images, real_y, TAG_REAL, names, config.batch_size),
            TAG_SYNTHETIC: evaluate_classifier(image_classifier, synth_images, synth_y, TAG_SYNTHETIC, names,
                                               config.batch_size),
        },
        "signal": {
            TAG_REAL: evaluate_classifier(signal_classifier, real_signals, real_y, TAG_REAL, names,
                                          config.batch_size),
            TAG_SYNTHETIC: evaluate_classifier(signal_classifier, synth_signals, synth_y, TAG_SYNTHETIC, names,
                                               config.batch_size),
        },
    }
    for variant, reports in classification.items():
        logger.info(f"{variant} classifier: real-test {reports[TAG_REAL].accuracy:.2f}%, "
                    f"synthetic {reports[TAG_SYNTHETIC].accuracy:.2f}%")

    fid = fid_score(real_images, synth_images, image_classifier, config.shrinkage, config.batch_size)
    logger.info(f"Frechet distance on classifier features: {fid.score:.4f}")

    real_raw = np.stack([stats.denormalize_window(w).values for w in real_norm])
    synth_raw = np.stack([stats.denormalize_window(w).values for w in synth_norm])
    pdfs = {name: pdf_compare(real_raw[:, c, :], synth_raw[:, c, :], config.bins)
            for c, name in enumerate(CHANNEL_NAMES)}

    pooled, per_channel = None, {}
    if config.tsne is not None:
        real_feat = extract_features(image_classifier, real_images, SOURCE_REAL, batch_size=config.batch_size)
        synth_feat = extract_features(image_classifier, synth_images, SOURCE_SYNTHETIC,
                                      batch_size=config.batch_size)
        pooled = _joint_tsne(real_feat.matrix, synth_feat.matrix, real_y, synth_y, config.tsne,
                             config.tsne_points, 0)
        if config.per_channel_tsne:
            for c, name in enumerate(CHANNEL_NAMES):
                per_channel[name] = _joint_tsne(real_signals[:, c, :], synth_signals[:, c, :], real_y, synth_y,
                                                config.tsne, config.tsne_points, c + 1)

    return EvaluationReport(class_names=names, classification=classification, fid=fid, pdfs=pdfs,
                            tsne=pooled, tsne_channels=per_channel)
