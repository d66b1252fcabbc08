"""
Mapping between pipeline objects and IDGC containers.

Three kinds of container are written: ``dataset`` (windows per split with
label and provenance tables plus normalization stats), ``denoiser`` and
``classifier`` (model state, optimizer moments, training history and
everything needed to rebuild the model).
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import ContainerFormatError
from ..data.signals import SOURCE_REAL, LabelVocabulary, NormalizationStats, SignalWindow
from ..embedding.delay_embedding import EmbeddingCodec, EmbeddingParams
from ..models.classifiers import ClassifierConfig, PlacementClassifier
from ..models.denoiser import DenoiserModel
from ..models.unet import BackboneConfig
from ..tensor.optim import AdamHyperParams, OptimizerState
from .container import Container

KIND_DATASET = "dataset"
KIND_DENOISER = "denoiser"
KIND_CLASSIFIER = "classifier"
MISSING = -1


def _kind(container: Container, expected: str) -> None:
    kind = container.require("kind")
    if kind != expected:
        raise ContainerFormatError(f"Expected a {expected} container, found '{kind}'",
                                   details={"kind": kind, "expected": expected})


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p)


def _join(values) -> str:
    return ",".join(str(int(v)) for v in values)


def _stats_entries(stats: NormalizationStats) -> Tuple[Dict[str, str], Dict[str, np.ndarray]]:
    meta = {"stats.computed_over": stats.computed_over, "stats.count": str(stats.count)}
    return meta, {"stats/mean": stats.mean.astype(np.float64), "stats/std": stats.std.astype(np.float64)}


def _stats_from(container: Container) -> NormalizationStats:
    return NormalizationStats(mean=container.tensor("stats/mean"), std=container.tensor("stats/std"),
                              computed_over=container.require("stats.computed_over"),
                              count=int(container.require("stats.count")))


def _codec_entries(codec: EmbeddingCodec) -> Dict[str, str]:
    return {"embedding.m": str(codec.params.m), "embedding.n": str(codec.params.n),
            "embedding.length": str(codec.params.length), "embedding.height": str(codec.image_shape[1]),
            "embedding.width": str(codec.image_shape[2]), "embedding.anchor": codec.anchor,
            "embedding.inversion": codec.inversion}


def _codec_from(container: Container) -> EmbeddingCodec:
    params = EmbeddingParams(m=int(container.require("embedding.m")), n=int(container.require("embedding.n")),
                             length=int(container.require("embedding.length")))
    return EmbeddingCodec(params, int(container.require("embedding.height")),
                          int(container.require("embedding.width")), container.require("embedding.anchor"),
                          container.require("embedding.inversion"))


@dataclass
class DatasetBundle:
    """Windows per split with the vocabulary and stats they were produced with."""
    splits: Dict[str, List[SignalWindow]]
    vocabulary: LabelVocabulary
    stats: NormalizationStats
    metadata: Dict[str, str] = field(default_factory=dict)

    def split(self, name: str) -> List[SignalWindow]:
        if name not in self.splits:
            raise ContainerFormatError(f"Dataset has no split '{name}'",
                                       details={"split": name, "available": list(self.splits)})
        return self.splits[name]


def dataset_to_container(splits: Dict[str, Sequence[SignalWindow]], vocabulary: LabelVocabulary,
                         stats: NormalizationStats, metadata: Optional[Dict[str, str]] = None) -> Container:
    meta = {"kind": KIND_DATASET, "vocabulary": vocabulary.to_metadata(), "splits": ",".join(splits)}
    meta.update(metadata or {})
    stats_meta, tensors = _stats_entries(stats)
    meta.update(stats_meta)
    for name, windows in splits.items():
        if windows:
            tensors[f"{name}/values"] = np.stack([w.values for w in windows])
        else:
            tensors[f"{name}/values"] = np.zeros((0, 3, 0), dtype=np.float32)
        tensors[f"{name}/labels"] = np.array([w.label for w in windows], dtype=np.int64)
        tensors[f"{name}/offsets"] = np.array([MISSING if w.offset is None else w.offset for w in windows],
                                              dtype=np.int64)
        tensors[f"{name}/seeds"] = np.array([MISSING if w.seed is None else w.seed for w in windows],
                                            dtype=np.int64)
        meta[f"split.{name}.source"] = windows[0].source if windows else SOURCE_REAL
        meta[f"split.{name}.normalized"] = str(bool(windows and windows[0].normalized)).lower()
        meta[f"split.{name}.recordings"] = json.dumps([w.recording_id for w in windows], separators=(",", ":"))
    return Container(metadata=meta, tensors=tensors)


def dataset_from_container(container: Container) -> DatasetBundle:
    _kind(container, KIND_DATASET)
    splits: Dict[str, List[SignalWindow]] = {}
    for name in [s for s in container.require("splits").split(",") if s]:
        values = container.tensor(f"{name}/values")
        labels = container.tensor(f"{name}/labels")
        offsets = container.tensor(f"{name}/offsets")
        seeds = container.tensor(f"{name}/seeds")
        recordings = json.loads(container.require(f"split.{name}.recordings"))
        if not len(labels) == len(offsets) == len(seeds) == len(recordings) == values.shape[0]:
            raise ContainerFormatError(f"Split '{name}' has inconsistent table lengths", details={"split": name})
        source = container.require(f"split.{name}.source")
        normalized = container.require(f"split.{name}.normalized") == "true"
        splits[name] = [SignalWindow(values=values[i], label=int(labels[i]), source=source, normalized=normalized,
                                     recording_id=recordings[i],
                                     offset=None if offsets[i] == MISSING else int(offsets[i]),
                                     seed=None if seeds[i] == MISSING else int(seeds[i]))
                        for i in range(values.shape[0])]
    return DatasetBundle(splits=splits, vocabulary=LabelVocabulary.from_metadata(container.require("vocabulary")),
                         stats=_stats_from(container), metadata=dict(container.metadata))


def _optimizer_entries(state: Optional[OptimizerState]) -> Tuple[Dict[str, str], Dict[str, np.ndarray]]:
    if state is None:
        return {}, {}
    hyper = state.hyper
    meta = {"optimizer.step": str(state.step), "optimizer.lr": repr(hyper.lr), "optimizer.beta1": repr(hyper.beta1),
            "optimizer.beta2": repr(hyper.beta2), "optimizer.eps": repr(hyper.eps),
            "optimizer.weight_decay": repr(hyper.weight_decay), "optimizer.decoupled": str(hyper.decoupled).lower()}
    return meta, state.tensors()


def optimizer_from_container(container: Container) -> Optional[OptimizerState]:
    if "optimizer.step" not in container.metadata:
        return None
    md = container.metadata
    hyper = AdamHyperParams(lr=float(md["optimizer.lr"]), beta1=float(md["optimizer.beta1"]),
                            beta2=float(md["optimizer.beta2"]), eps=float(md["optimizer.eps"]),
                            weight_decay=float(md["optimizer.weight_decay"]),
                            decoupled=md["optimizer.decoupled"] == "true")
    return OptimizerState.from_tensors(hyper, int(md["optimizer.step"]), container.tensors)


@dataclass
class DenoiserCheckpoint:
    model: DenoiserModel
    codec: EmbeddingCodec
    stats: NormalizationStats
    epoch: int
    history: List[float]
    optimizer_state: Optional[OptimizerState]
    metadata: Dict[str, str]


def denoiser_to_container(model: DenoiserModel, codec: EmbeddingCodec, stats: NormalizationStats, epoch: int,
                          history: Sequence[float], optimizer_state: Optional[OptimizerState],
                          metadata: Optional[Dict[str, str]] = None) -> Container:
    cfg = model.config
    meta = {"kind": KIND_DENOISER, "vocabulary": model.vocabulary.to_metadata(), "epoch": str(epoch),
            "sigma_data": repr(model.sigma_data),
            "backbone.channels": str(cfg.channels), "backbone.height": str(cfg.height),
            "backbone.width": str(cfg.width), "backbone.model_channels": str(cfg.model_channels),
            "backbone.channel_multipliers": _join(cfg.channel_multipliers),
            "backbone.attention_resolutions": _join(sorted(cfg.attention_resolutions)),
            "backbone.embedding_multiplier": str(cfg.embedding_multiplier)}
    meta.update(_codec_entries(codec))
    meta.update(metadata or {})
    stats_meta, tensors = _stats_entries(stats)
    meta.update(stats_meta)
    opt_meta, opt_tensors = _optimizer_entries(optimizer_state)
    meta.update(opt_meta)
    tensors.update(model.state_dict())
    tensors.update(opt_tensors)
    tensors["history/mean_loss"] = np.asarray(history, dtype=np.float64)
    return Container(metadata=meta, tensors=tensors)


def denoiser_from_container(container: Container) -> DenoiserCheckpoint:
    _kind(container, KIND_DENOISER)
    vocabulary = LabelVocabulary.from_metadata(container.require("vocabulary"))
    config = BackboneConfig(num_classes=len(vocabulary), channels=int(container.require("backbone.channels")),
                            height=int(container.require("backbone.height")),
                            width=int(container.require("backbone.width")),
                            model_channels=int(container.require("backbone.model_channels")),
                            channel_multipliers=_ints(container.require("backbone.channel_multipliers")),
                            attention_resolutions=frozenset(_ints(container.require("backbone.attention_resolutions"))),
                            embedding_multiplier=int(container.require("backbone.embedding_multiplier")))
    model = DenoiserModel(config, vocabulary, np.random.default_rng(0),
                          sigma_data=float(container.require("sigma_data")))
    model.load_state_dict({k: v for k, v in container.tensors.items() if k.startswith("backbone/")})
    return DenoiserCheckpoint(model=model, codec=_codec_from(container), stats=_stats_from(container),
                              epoch=int(container.require("epoch")),
                              history=[float(v) for v in container.tensor("history/mean_loss")],
                              optimizer_state=optimizer_from_container(container),
                              metadata=dict(container.metadata))


@dataclass
class ClassifierCheckpoint:
    model: PlacementClassifier
    vocabulary: LabelVocabulary
    codec: EmbeddingCodec
    stats: NormalizationStats
    metadata: Dict[str, str]

    @property
    def variant(self) -> str:
        return self.model.config.variant


def classifier_to_container(model: PlacementClassifier, vocabulary: LabelVocabulary, codec: EmbeddingCodec,
                            stats: NormalizationStats, history: Sequence[Tuple[int, float, float]],
                            metadata: Optional[Dict[str, str]] = None) -> Container:
    cfg = model.config
    meta = {"kind": KIND_CLASSIFIER, "vocabulary": vocabulary.to_metadata(), "classifier.variant": cfg.variant,
            "classifier.in_channels": str(cfg.in_channels), "classifier.filters": _join(cfg.filters),
            "classifier.kernel": str(cfg.kernel_size), "classifier.pool": str(cfg.pool),
            "classifier.hidden": str(cfg.hidden), "classifier.dropout": repr(cfg.dropout),
            "classifier.adaptive_size": str(cfg.adaptive_size)}
    meta.update(_codec_entries(codec))
    meta.update(metadata or {})
    stats_meta, tensors = _stats_entries(stats)
    meta.update(stats_meta)
    tensors.update(model.state_dict())
    tensors["history/epoch_losses"] = np.asarray([[e, t, v] for e, t, v in history],
                                                 dtype=np.float64).reshape(-1, 3)
    return Container(metadata=meta, tensors=tensors)


def classifier_from_container(container: Container) -> ClassifierCheckpoint:
    _kind(container, KIND_CLASSIFIER)
    vocabulary = LabelVocabulary.from_metadata(container.require("vocabulary"))
    config = ClassifierConfig(variant=container.require("classifier.variant"), num_classes=len(vocabulary),
                              in_channels=int(container.require("classifier.in_channels")),
                              filters=_ints(container.require("classifier.filters")),
                              kernel=int(container.require("classifier.kernel")),
                              pool=int(container.require("classifier.pool")),
                              hidden=int(container.require("classifier.hidden")),
                              dropout=float(container.require("classifier.dropout")),
                              adaptive_size=int(container.require("classifier.adaptive_size")))
    model = PlacementClassifier(config, np.random.default_rng(0))
    names = {name for name in model.state_dict()}
    model.load_state_dict({k: v for k, v in container.tensors.items() if k in names})
    return ClassifierCheckpoint(model=model, vocabulary=vocabulary, codec=_codec_from(container),
                                stats=_stats_from(container), metadata=dict(container.metadata))
