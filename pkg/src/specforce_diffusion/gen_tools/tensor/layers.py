"""
Parameterized layers built on the primitive operations.

``Module`` keeps parameters and buffers in attribute order so parameter names
(``<attr>/<attr>/<param>``) are stable and can be used as checkpoint keys.
"""

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..core.exceptions import TensorShapeError
from . import ops
from .tensor import Parameter, Tensor, get_default_dtype

INIT_MODES = ("fan_in", "kaiming", "zero")


def init_weight(shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator, mode: str = "fan_in") -> np.ndarray:
    """Normal weights with std sqrt(1/fan_in) (``fan_in``), sqrt(2/fan_in) (``kaiming``) or zeros."""
    if mode == "zero":
        return np.zeros(shape, dtype=get_default_dtype())
    gain = 2.0 if mode == "kaiming" else 1.0
    return (rng.standard_normal(shape) * math.sqrt(gain / fan_in)).astype(get_default_dtype())


class Module:
    """Base class: attribute-ordered parameters, buffers and train/eval mode."""

    def __init__(self):
        self.training = True
        self._buffers: Dict[str, np.ndarray] = {}

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[Tuple[str, object]]:
        for key, value in self.__dict__.items():
            if key.startswith("_") or key == "training":
                continue
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    yield f"{key}/{i}", child

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Parameter]]:
        named = []
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                value.name = name
                named.append((name, value))
            else:
                named.extend(value.named_parameters(prefix=f"{name}/"))
        return named

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> List[Tuple[str, np.ndarray]]:
        named = [(f"{prefix}{k}", v) for k, v in self._buffers.items()]
        for key, value in self._children():
            if isinstance(value, Module):
                named.extend(value.named_buffers(prefix=f"{prefix}{key}/"))
        return named

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, value in self._children():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if missing or unexpected:
            raise TensorShapeError("State dict does not match the module",
                                   details={"missing": missing, "unexpected": unexpected})
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise TensorShapeError(f"Parameter {name}: checkpoint shape {state[name].shape} != {p.shape}",
                                       details={"name": name})
            p.data = np.ascontiguousarray(state[name].astype(p.dtype))
        for name, b in buffers.items():
            b[...] = state[name]


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, init: str = "fan_in"):
        super().__init__()
        self.weight = Parameter(init_weight((out_features, in_features), in_features, rng, init))
        self.bias = Parameter(np.zeros(out_features, dtype=get_default_dtype())) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: Optional[int] = None, init: str = "fan_in"):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        fan_in = in_channels * kernel * kernel
        self.weight = Parameter(init_weight((out_channels, in_channels, kernel, kernel), fan_in, rng, init))
        self.bias = Parameter(np.zeros(out_channels, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: Optional[int] = None, init: str = "fan_in"):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = Parameter(init_weight((out_channels, in_channels, kernel), in_channels * kernel, rng, init))
        self.bias = Parameter(np.zeros(out_channels, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm(Module):
    """Batch normalization for (N, C, L) or (N, C, H, W) inputs."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.weight = Parameter(np.ones(channels, dtype=get_default_dtype()))
        self.bias = Parameter(np.zeros(channels, dtype=get_default_dtype()))
        self._buffers["running_mean"] = np.zeros(channels, dtype=np.float64)
        self._buffers["running_var"] = np.ones(channels, dtype=np.float64)

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(x, self.weight, self.bias, self._buffers["running_mean"],
                              self._buffers["running_var"], self.training, self.momentum, self.eps)


def group_count(channels: int, max_groups: int = 32, min_channels_per_group: int = 4) -> int:
    """Largest group count <= min(max_groups, channels // min_channels_per_group) dividing ``channels``."""
    groups = max(1, min(max_groups, channels // min_channels_per_group))
    while channels % groups:
        groups -= 1
    return groups


class GroupNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.groups = group_count(channels)
        self.eps = eps
        self.weight = Parameter(np.ones(channels, dtype=get_default_dtype()))
        self.bias = Parameter(np.zeros(channels, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return ops.group_norm(x, self.groups, self.weight, self.bias, self.eps)


class Dropout(Module):
    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        self.rate = rate
        self._rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.rate, self._rng, self.training)


class Embedding(Module):
    def __init__(self, count: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter((rng.standard_normal((count, dim))).astype(get_default_dtype()))

    def forward(self, ids: np.ndarray) -> Tensor:
        return ops.embedding(ids, self.weight)
