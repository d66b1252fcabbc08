"""
Run configuration manager.

Run configurations are INI files with the sections [run], [engine],
[embedding], [diffusion], [backbone], [classifier], [data] and [evaluation].
The packaged ``default_config.ini`` supplies every key; a user file only needs
the keys it changes. Unknown sections and keys are rejected.

The validated values are exposed as frozen dataclass views per section, and
``effective_config()`` returns the fully resolved configuration as strings so
it can be echoed into run manifests and checkpoint metadata.
"""

import configparser
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from ..gen_tools.core.exceptions import ConfigurationError, SpecforceError
from ..gen_tools.data.preprocessing import STATS_SCOPES
from ..gen_tools.data.signals import LabelVocabulary
from ..gen_tools.diffusion.edm import SOLVERS, NoiseDistribution, SamplerConfig, TrainConfig
from ..gen_tools.embedding.delay_embedding import INVERSION_MODES, PAD_ANCHORS, EmbeddingCodec, EmbeddingParams
from ..gen_tools.evaluation.cross_evaluation import CrossEvaluationConfig
from ..gen_tools.evaluation.tsne import TsneConfig
from ..gen_tools.models.classifiers import ClassifierConfig
from ..gen_tools.models.training import TrainSpec
from ..gen_tools.models.unet import BackboneConfig
from ..gen_tools.tensor.optim import NONFINITE_POLICIES

DEFAULT_CONFIG_PATH = Path(__file__).with_name("default_config.ini")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
DTYPES = ("float32", "float64")


class ConfigValidationError(ConfigurationError):
    """Exception raised for configuration validation errors."""
    pass


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{text}'")


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _str_list(text: str) -> Tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _choice(*valid: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        value = text.strip()
        if value not in valid:
            raise ValueError(f"'{value}' is not one of {list(valid)}")
        return value
    return parse


def _positive(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def checked(text: str):
        value = parse(text)
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value
    return checked


def _non_negative(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def checked(text: str):
        value = parse(text)
        if value < 0:
            raise ValueError(f"must be non-negative, got {value}")
        return value
    return checked


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise ValueError(f"must lie in [0, 1), got {value}")
    return value


def _optional_float(text: str) -> Optional[float]:
    return float(text) if text.strip() else None


# section -> key -> parser; defaults live in default_config.ini
SCHEMA: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "run": {
        "seed": _non_negative(int),
        "log_level": lambda t: _choice(*LOG_LEVELS)(t.upper()),
        "progress": _bool,
        "error_log_dir": str.strip,
    },
    "engine": {
        "dtype": _choice(*DTYPES),
        "nonfinite": _choice(*NONFINITE_POLICIES),
    },
    "embedding": {
        "m": _positive(int),
        "n": _positive(int),
        "length": _positive(int),
        "target_height": _non_negative(int),
        "target_width": _non_negative(int),
        "anchor": _choice(*PAD_ANCHORS),
        "inversion": _choice(*INVERSION_MODES),
    },
    "diffusion": {
        "sigma_min": _positive(float),
        "sigma_max": _positive(float),
        "sigma_data": _positive(float),
        "p_mean": float,
        "p_std": _non_negative(float),
        "steps": _positive(int),
        "rho": _positive(float),
        "solver": _choice(*SOLVERS),
        "learning_rate": _positive(float),
        "weight_decay": _non_negative(float),
        "batch_size": _positive(int),
        "epochs": _non_negative(int),
        "checkpoint_every": _positive(int),
        "nonfinite_retries": _non_negative(int),
        "sample_batch_size": _positive(int),
    },
    "backbone": {
        "model_channels": _positive(int),
        "channel_multipliers": _int_list,
        "attention_resolutions": _int_list,
        "embedding_multiplier": _positive(int),
    },
    "classifier": {
        "learning_rate": _positive(float),
        "weight_decay": _non_negative(float),
        "batch_size": _positive(int),
        "max_epochs": _positive(int),
        "patience": _positive(int),
        "filters": _int_list,
        "image_kernel": _positive(int),
        "signal_kernel": _positive(int),
        "pool": _positive(int),
        "hidden": _positive(int),
        "dropout": _fraction,
        "adaptive_size": _positive(int),
    },
    "data": {
        "labels": _str_list,
        "data_root": str.strip,
        "manifest": str.strip,
        "sample_rate": _positive(float),
        "resample": _bool,
        "window": _positive(int),
        "overlap": _fraction,
        "drop": _non_negative(int),
        "split": _float_list,
        "stats_scope": _choice(*STATS_SCOPES),
        "workers": _positive(int),
        "toy_per_class": _positive(int),
    },
    "evaluation": {
        "bins": _positive(int),
        "tsne": _bool,
        "per_channel_tsne": _bool,
        "tsne_points": _positive(int),
        "perplexity": _positive(float),
        "tsne_iterations": _positive(int),
        "tsne_learning_rate": _positive(float),
        "early_exaggeration": _positive(float),
        "shrinkage": _optional_float,
        "batch_size": _positive(int),
    },
}


@dataclass(frozen=True)
class RunSettings:
    seed: int
    log_level: str
    progress: bool
    error_log_dir: str


@dataclass(frozen=True)
class EngineSettings:
    dtype: str
    nonfinite: str


@dataclass(frozen=True)
class EmbeddingSettings:
    m: int
    n: int
    length: int
    target_height: int
    target_width: int
    anchor: str
    inversion: str

    def params(self) -> EmbeddingParams:
        return EmbeddingParams(m=self.m, n=self.n, length=self.length)

    def codec(self) -> EmbeddingCodec:
        """0 for a target dimension means no padding in that direction."""
        return EmbeddingCodec(self.params(), self.target_height or None, self.target_width or None,
                              self.anchor, self.inversion)


@dataclass(frozen=True)
class DiffusionSettings:
    sigma_min: float
    sigma_max: float
    sigma_data: float
    p_mean: float
    p_std: float
    steps: int
    rho: float
    solver: str
    learning_rate: float
    weight_decay: float
    batch_size: int
    epochs: int
    checkpoint_every: int
    nonfinite_retries: int
    sample_batch_size: int

    def noise_distribution(self) -> NoiseDistribution:
        return NoiseDistribution(p_mean=self.p_mean, p_std=self.p_std, sigma_min=self.sigma_min,
                                 sigma_max=self.sigma_max, sigma_data=self.sigma_data)

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(steps=self.steps, rho=self.rho, sigma_min=self.sigma_min,
                             sigma_max=self.sigma_max, solver=self.solver)

    def train_config(self, seed: int, nonfinite: str = "trap") -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs,
                           seed=seed, checkpoint_every=self.checkpoint_every, weight_decay=self.weight_decay,
                           decoupled=True, nonfinite_retries=self.nonfinite_retries, nonfinite=nonfinite)


@dataclass(frozen=True)
class BackboneSettings:
    model_channels: int
    channel_multipliers: Tuple[int, ...]
    attention_resolutions: Tuple[int, ...]
    embedding_multiplier: int

    def backbone_config(self, num_classes: int, image_shape: Tuple[int, int, int]) -> BackboneConfig:
        channels, height, width = image_shape
        return BackboneConfig(num_classes=num_classes, channels=channels, height=height, width=width,
                              model_channels=self.model_channels, channel_multipliers=self.channel_multipliers,
                              attention_resolutions=frozenset(self.attention_resolutions),
                              embedding_multiplier=self.embedding_multiplier)


@dataclass(frozen=True)
class ClassifierSettings:
    learning_rate: float
    weight_decay: float
    batch_size: int
    max_epochs: int
    patience: int
    filters: Tuple[int, ...]
    image_kernel: int
    signal_kernel: int
    pool: int
    hidden: int
    dropout: float
    adaptive_size: int

    def classifier_config(self, variant: str, num_classes: int) -> ClassifierConfig:
        kernel = self.image_kernel if variant == "image" else self.signal_kernel
        return ClassifierConfig(variant=variant, num_classes=num_classes, filters=self.filters, kernel=kernel,
                                pool=self.pool, hidden=self.hidden, dropout=self.dropout,
                                adaptive_size=self.adaptive_size)

    def train_spec(self, split: Tuple[float, float, float], seed: int, nonfinite: str = "trap") -> TrainSpec:
        return TrainSpec(learning_rate=self.learning_rate, weight_decay=self.weight_decay, decoupled=False,
                         batch_size=self.batch_size, max_epochs=self.max_epochs, patience=self.patience,
                         split=split, seed=seed, nonfinite=nonfinite)


@dataclass(frozen=True)
class DataSettings:
    labels: Tuple[str, ...]
    data_root: str
    manifest: str
    sample_rate: float
    resample: bool
    window: int
    overlap: float
    drop: int
    split: Tuple[float, ...]
    stats_scope: str
    workers: int
    toy_per_class: int

    def vocabulary(self) -> LabelVocabulary:
        return LabelVocabulary(self.labels)


@dataclass(frozen=True)
class EvaluationSettings:
    bins: int
    tsne: bool
    per_channel_tsne: bool
    tsne_points: int
    perplexity: float
    tsne_iterations: int
    tsne_learning_rate: float
    early_exaggeration: float
    shrinkage: Optional[float]
    batch_size: int

    def cross_evaluation_config(self, seed: int) -> CrossEvaluationConfig:
        tsne = None
        if self.tsne:
            tsne = TsneConfig(perplexity=self.perplexity, iterations=self.tsne_iterations,
                              learning_rate=self.tsne_learning_rate, early_exaggeration=self.early_exaggeration,
                              seed=seed)
        return CrossEvaluationConfig(bins=self.bins, tsne=tsne, tsne_points=self.tsne_points,
                                     per_channel_tsne=self.per_channel_tsne, shrinkage=self.shrinkage,
                                     batch_size=self.batch_size)


SECTION_VIEWS = {
    "run": RunSettings,
    "engine": EngineSettings,
    "embedding": EmbeddingSettings,
    "diffusion": DiffusionSettings,
    "backbone": BackboneSettings,
    "classifier": ClassifierSettings,
    "data": DataSettings,
    "evaluation": EvaluationSettings,
}


class RunConfigManager:
    """Loads, validates and exposes a run configuration.

    Values are resolved in two layers: the packaged defaults, then the user
    file (if any), then explicit ``overrides`` (section -> key -> string),
    which the CLI uses for options such as ``--seed``.
    """

    def __init__(self, config_file: Optional[Union[str, Path]] = None,
                 overrides: Optional[Dict[str, Dict[str, str]]] = None):
        self.logger = logging.getLogger(__name__)
        self.config_file = Path(config_file) if config_file else None
        self.raw: Dict[str, Dict[str, str]] = {}
        self.values: Dict[str, Dict[str, Any]] = {}
        self.load_config(overrides or {})

    def _read(self, path: Path) -> configparser.ConfigParser:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as handle:
                parser.read_file(handle)
        except FileNotFoundError:
            raise ConfigValidationError(f"Configuration file not found: {path}", details={"path": str(path)})
        except configparser.Error as e:
            raise ConfigValidationError(f"Cannot parse configuration file {path}: {e}", details={"path": str(path)})
        return parser

    def _merge(self, layer: Dict[str, Dict[str, str]], origin: str) -> None:
        for section, entries in layer.items():
            if section not in SCHEMA:
                raise ConfigValidationError(f"{origin}: unknown section [{section}]. Valid sections: {list(SCHEMA)}",
                                            details={"section": section, "valid": list(SCHEMA)})
            for key, value in entries.items():
                if key not in SCHEMA[section]:
                    raise ConfigValidationError(
                        f"{origin}: unknown key '{key}' in [{section}]. Valid keys: {list(SCHEMA[section])}",
                        details={"section": section, "key": key, "valid": list(SCHEMA[section])})
                self.raw.setdefault(section, {})[key] = str(value)

    def load_config(self, overrides: Dict[str, Dict[str, str]]) -> None:
        """
        Resolve defaults, the user file and overrides, then validate.

        Raises:
            ConfigValidationError: Unknown section/key, unparsable value or inconsistent settings
        """
        self.raw = {}
        defaults = self._read(DEFAULT_CONFIG_PATH)
        self._merge({s: dict(defaults.items(s)) for s in defaults.sections()}, str(DEFAULT_CONFIG_PATH))
        if self.config_file is not None:
            user = self._read(self.config_file)
            self._merge({s: dict(user.items(s)) for s in user.sections()}, str(self.config_file))
            self.logger.info(f"Loaded run configuration from {self.config_file}")
        self._merge(overrides, "override")
        self.validate_config()

    def validate_config(self) -> None:
        values: Dict[str, Dict[str, Any]] = {}
        for section, keys in SCHEMA.items():
            values[section] = {}
            for key, parse in keys.items():
                if key not in self.raw.get(section, {}):
                    raise ConfigValidationError(f"Missing key '{key}' in [{section}]",
                                                details={"section": section, "key": key})
                text = self.raw[section][key]
                try:
                    values[section][key] = parse(text)
                except ValueError as e:
                    raise ConfigValidationError(f"[{section}] {key} = '{text}': {e}",
                                                details={"section": section, "key": key, "value": text})
        self.values = values
        self._validate_cross_section()

    def _validate_cross_section(self) -> None:
        v = self.values
        if v["embedding"]["length"] != v["data"]["window"]:
            raise ConfigValidationError(
                f"[embedding] length ({v['embedding']['length']}) must equal [data] window ({v['data']['window']})",
                details={"length": v["embedding"]["length"], "window": v["data"]["window"]})
        split = v["data"]["split"]
        if len(split) != 3 or any(f <= 0 for f in split) or abs(sum(split) - 1.0) > 1e-9:
            raise ConfigValidationError(f"[data] split must be three positive fractions summing to 1, got {split}",
                                        details={"split": list(split)})
        if not v["diffusion"]["sigma_min"] < v["diffusion"]["sigma_max"]:
            raise ConfigValidationError("[diffusion] sigma_min must be below sigma_max",
                                        details={"sigma_min": v["diffusion"]["sigma_min"],
                                                 "sigma_max": v["diffusion"]["sigma_max"]})
        if len(v["classifier"]["filters"]) < 1 or not v["backbone"]["channel_multipliers"]:
            raise ConfigValidationError("[classifier] filters and [backbone] channel_multipliers must be non-empty")
        try:
            self.embedding.codec()
            self.data.vocabulary()
        except SpecforceError as e:
            if isinstance(e, ConfigValidationError):
                raise
            raise ConfigValidationError(f"Invalid configuration: {e.message}", details=e.details)

    def _view(self, section: str):
        return SECTION_VIEWS[section](**self.values[section])

    @property
    def run(self) -> RunSettings:
        return self._view("run")

    @property
    def engine(self) -> EngineSettings:
        return self._view("engine")

    @property
    def embedding(self) -> EmbeddingSettings:
        return self._view("embedding")

    @property
    def diffusion(self) -> DiffusionSettings:
        return self._view("diffusion")

    @property
    def backbone(self) -> BackboneSettings:
        return self._view("backbone")

    @property
    def classifier(self) -> ClassifierSettings:
        return self._view("classifier")

    @property
    def data(self) -> DataSettings:
        return self._view("data")

    @property
    def evaluation(self) -> EvaluationSettings:
        return self._view("evaluation")

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def effective_config(self) -> Dict[str, Dict[str, str]]:
        """Resolved configuration, section -> key -> string, in schema order."""
        return {section: {key: self.raw[section][key].strip() for key in keys} for section, keys in SCHEMA.items()}

    def metadata(self) -> Dict[str, str]:
        """Flattened ``config.<section>.<key>`` entries for container metadata."""
        return {f"config.{section}.{key}": value
                for section, entries in self.effective_config().items() for key, value in entries.items()}

    def save_config(self, path: Union[str, Path]) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_dict(self.effective_config())
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            parser.write(handle)
