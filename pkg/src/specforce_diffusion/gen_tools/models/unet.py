"""
Reduced SongUNet-style backbone F_theta.

Encoder/decoder over (N, C, H, W) images with one residual block per
resolution, skip concatenation, strided-conv downsampling and
nearest-neighbour upsampling. The noise level enters through a sinusoidal
embedding of c_noise, the class label through a learned embedding added to it;
the result is projected into every residual block.
"""

import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Tuple

import numpy as np

from ..core.exceptions import TensorShapeError
from ..tensor import ops
from ..tensor.layers import Conv2d, Embedding, GroupNorm, Linear, Module
from ..tensor.tensor import Tensor

SKIP_SCALE = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class BackboneConfig:
    """Backbone shape. ``attention_resolutions`` holds spatial heights that get self-attention."""
    num_classes: int
    channels: int = 3
    height: int = 64
    width: int = 64
    model_channels: int = 32
    channel_multipliers: Tuple[int, ...] = (1, 2, 2, 2)
    attention_resolutions: FrozenSet[int] = field(default_factory=frozenset)
    embedding_multiplier: int = 4

    def validate(self) -> None:
        factor = 2 ** (len(self.channel_multipliers) - 1)
        if not self.channel_multipliers or any(m < 1 for m in self.channel_multipliers):
            raise TensorShapeError("channel_multipliers must be a non-empty list of positive integers",
                                   details={"channel_multipliers": list(self.channel_multipliers)})
        if self.height % factor or self.width % factor:
            raise TensorShapeError(
                f"Image {self.height}x{self.width} is not divisible by {factor} "
                f"({len(self.channel_multipliers)} resolution levels)",
                details={"height": self.height, "width": self.width, "factor": factor})
        if self.model_channels < 2 or self.model_channels % 2:
            raise TensorShapeError("model_channels must be an even integer >= 2",
                                   details={"model_channels": self.model_channels})
        if self.num_classes < 1:
            raise TensorShapeError("num_classes must be positive", details={"num_classes": self.num_classes})

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return self.channels, self.height, self.width


def positional_embedding(values: np.ndarray, channels: int, max_positions: int = 10000) -> np.ndarray:
    """Sinusoidal embedding [cos(v f_k), sin(v f_k)] with f_k = (1/max_positions)^(k/(channels/2))."""
    half = channels // 2
    freqs = (1.0 / max_positions) ** (np.arange(half, dtype=np.float64) / half)
    angles = np.outer(np.asarray(values, dtype=np.float64).reshape(-1), freqs)
    return np.concatenate([np.cos(angles), np.sin(angles)], axis=1)


class UNetBlock(Module):
    """GroupNorm -> SiLU -> conv, plus the embedding projection, twice; residual sum scaled by 1/sqrt(2)."""

    def __init__(self, in_channels: int, out_channels: int, emb_channels: int, rng: np.random.Generator,
                 attention: bool = False):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.norm0 = GroupNorm(in_channels)
        self.conv0 = Conv2d(in_channels, out_channels, 3, rng)
        self.affine = Linear(emb_channels, out_channels, rng)
        self.norm1 = GroupNorm(out_channels)
        self.conv1 = Conv2d(out_channels, out_channels, 3, rng)
        self.skip = Conv2d(in_channels, out_channels, 1, rng) if in_channels != out_channels else None
        self.attention = attention
        if attention:
            self.norm2 = GroupNorm(out_channels)
            self.qkv = Conv2d(out_channels, 3 * out_channels, 1, rng)
            self.proj = Conv2d(out_channels, out_channels, 1, rng, init="zero")

    def forward(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.conv0(ops.silu(self.norm0(x)))
        h = ops.add_channel(h, self.affine(emb))
        h = self.conv1(ops.silu(self.norm1(h)))
        h = ops.scale(ops.add(h, self.skip(x) if self.skip is not None else x), SKIP_SCALE)
        if self.attention:
            h = ops.scale(ops.add(h, self._attend(h)), SKIP_SCALE)
        return h

    def _attend(self, h: Tensor) -> Tensor:
        n, c, height, width = h.shape
        qkv = self.qkv(self.norm2(h))
        q, k, v = (ops.reshape(ops.slice_channels(qkv, i * c, (i + 1) * c), (n, c, height * width))
                   for i in range(3))
        a = ops.attention(q, k, v)
        return self.proj(ops.reshape(a, (n, c, height, width)))


class SongUNet(Module):
    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        config.validate()
        self.config = config
        mc = config.model_channels
        emb_channels = mc * config.embedding_multiplier
        widths = [mc * m for m in config.channel_multipliers]

        self.map_label = Embedding(config.num_classes, mc, rng)
        self.map_layer0 = Linear(mc, emb_channels, rng)
        self.map_layer1 = Linear(emb_channels, emb_channels, rng)

        self.conv_in = Conv2d(config.channels, widths[0], 3, rng)
        enc, down = [], []
        cin = widths[0]
        for level, width in enumerate(widths):
            res = config.height >> level
            if level > 0:
                down.append(Conv2d(cin, cin, 3, rng, stride=2))
            enc.append(UNetBlock(cin, width, emb_channels, rng, attention=res in config.attention_resolutions))
            cin = width
        self.enc = enc
        self.down = down
        self.mid = UNetBlock(cin, cin, emb_channels, rng, attention=bool(config.attention_resolutions))

        dec, up = [], []
        for level in reversed(range(len(widths))):
            res = config.height >> level
            dec.append(UNetBlock(cin + widths[level], widths[level], emb_channels, rng,
                                 attention=res in config.attention_resolutions))
            cin = widths[level]
            if level > 0:
                up.append(Conv2d(cin, cin, 3, rng))
        self.dec = dec
        self.up = up
        self.out_norm = GroupNorm(widths[0])
        self.out_conv = Conv2d(widths[0], config.channels, 3, rng, init="zero")

    def embed(self, c_noise: np.ndarray, labels: np.ndarray) -> Tensor:
        noise = Tensor(positional_embedding(c_noise, self.config.model_channels))
        emb = ops.add(noise, self.map_label(labels))
        emb = ops.silu(self.map_layer0(emb))
        return ops.silu(self.map_layer1(emb))

    def forward(self, x: Tensor, c_noise: np.ndarray, labels: np.ndarray) -> Tensor:
        expected = self.config.image_shape
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise TensorShapeError(f"Backbone expects (N, {expected[0]}, {expected[1]}, {expected[2]}), got {x.shape}",
                                   details={"expected": list(expected), "got": list(x.shape)})
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != x.shape[0] or np.asarray(c_noise).size != x.shape[0]:
            raise TensorShapeError("One label and one noise level are needed per sample",
                                   details={"batch": x.shape[0], "labels": int(labels.shape[0]),
                                            "noise": int(np.asarray(c_noise).size)})
        if labels.size and (labels.min() < 0 or labels.max() >= self.config.num_classes):
            raise TensorShapeError(f"Labels outside [0, {self.config.num_classes})",
                                   details={"labels": sorted(set(labels.tolist()))})

        emb = self.embed(c_noise, labels)
        h = self.conv_in(x)
        skips: List[Tensor] = []
        for level, block in enumerate(self.enc):
            if level > 0:
                h = self.down[level - 1](h)
            h = block(h, emb)
            skips.append(h)
        h = self.mid(h, emb)
        ups = iter(self.up)
        for i, block in enumerate(self.dec):
            h = block(ops.concat([h, skips.pop()], axis=1), emb)
            if i < len(self.dec) - 1:
                h = next(ups)(ops.upsample_nearest2d(h, 2))
        return self.out_conv(ops.silu(self.out_norm(h)))
