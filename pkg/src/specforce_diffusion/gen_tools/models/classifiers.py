"""
Placement classifiers.

Both variants share one topology: four [conv -> batch-norm -> ReLU -> max-pool]
stages, adaptive average pooling to a fixed map, a 256-unit hidden layer with
dropout, and a linear head. The image variant works on delay-embedded images
with 2D ops, the signal variant on time-domain windows with 1D ops.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..core.exceptions import ConfigurationError, TensorShapeError
from ..tensor import ops
from ..tensor.layers import BatchNorm, Conv1d, Conv2d, Dropout, Linear, Module
from ..tensor.tensor import Tensor, as_tensor

VARIANTS = ("image", "signal")
DEFAULT_FILTERS = (16, 32, 64, 128)


@dataclass(frozen=True)
class ClassifierConfig:
    variant: str
    num_classes: int
    in_channels: int = 3
    filters: Tuple[int, ...] = DEFAULT_FILTERS
    kernel: int = 0
    pool: int = 2
    hidden: int = 256
    dropout: float = 0.5
    adaptive_size: int = 4

    @property
    def kernel_size(self) -> int:
        if self.kernel:
            return self.kernel
        return 3 if self.variant == "image" else 5

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"Unknown classifier variant '{self.variant}'",
                                     details={"variant": self.variant, "valid": list(VARIANTS)})
        if self.num_classes < 2:
            raise ConfigurationError("A classifier needs at least two classes",
                                     details={"num_classes": self.num_classes})
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must lie in [0, 1)", details={"dropout": self.dropout})
        if self.kernel_size % 2 == 0:
            raise ConfigurationError("kernel size must be odd for same-size padding",
                                     details={"kernel": self.kernel_size})

    def min_input_size(self) -> int:
        return self.pool ** len(self.filters)


class PlacementClassifier(Module):
    def __init__(self, config: ClassifierConfig, rng: np.random.Generator):
        super().__init__()
        config.validate()
        self.config = config
        conv = Conv2d if config.variant == "image" else Conv1d
        convs, norms = [], []
        cin = config.in_channels
        for width in config.filters:
            convs.append(conv(cin, width, config.kernel_size, rng, init="kaiming"))
            norms.append(BatchNorm(width))
            cin = width
        self.convs = convs
        self.norms = norms
        spatial = config.adaptive_size ** (2 if config.variant == "image" else 1)
        self.fc1 = Linear(cin * spatial, config.hidden, rng, init="kaiming")
        self.drop = Dropout(config.dropout, rng)
        self.fc2 = Linear(config.hidden, config.num_classes, rng, init="kaiming")

    def _check_input(self, x: Tensor) -> None:
        rank = 4 if self.config.variant == "image" else 3
        spatial = x.shape[2:]
        if x.ndim != rank or x.shape[1] != self.config.in_channels:
            raise TensorShapeError(
                f"{self.config.variant} classifier expects rank-{rank} input with "
                f"{self.config.in_channels} channels, got {x.shape}",
                details={"variant": self.config.variant, "dims": list(x.shape)})
        if min(spatial) < self.config.min_input_size():
            raise TensorShapeError(
                f"Input extent {tuple(spatial)} is too small for {len(self.config.filters)} pooling stages",
                details={"dims": list(x.shape), "minimum": self.config.min_input_size()})

    def features(self, x) -> Tensor:
        """Penultimate 256-unit activations (after ReLU, before dropout)."""
        x = as_tensor(x)
        self._check_input(x)
        image = self.config.variant == "image"
        pool = ops.max_pool2d if image else ops.max_pool1d
        h = x
        for conv, norm in zip(self.convs, self.norms):
            h = pool(ops.relu(norm(conv(h))), self.config.pool)
        if image:
            h = ops.adaptive_avg_pool2d(h, self.config.adaptive_size)
        else:
            h = ops.adaptive_avg_pool1d(h, self.config.adaptive_size)
        return ops.relu(self.fc1(ops.flatten(h)))

    def forward(self, x) -> Tensor:
        """Logits of shape (batch, num_classes); softmax is applied by the loss or ``predict_proba``."""
        return self.fc2(self.drop(self.features(x)))

    def predict_proba(self, x) -> np.ndarray:
        return ops.softmax(self.forward(x), axis=1).data


def build_classifier(config: ClassifierConfig, rng: np.random.Generator) -> PlacementClassifier:
    return PlacementClassifier(config, rng)
