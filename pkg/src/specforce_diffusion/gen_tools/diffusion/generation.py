"""
Class-conditional generation of specific-force windows.
"""

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..core.exceptions import DataValidationError
from ..data.signals import SOURCE_SYNTHETIC, NormalizationStats, SignalWindow
from ..embedding.delay_embedding import EmbeddingCodec
from ..models.denoiser import DenoiserModel
from ..utils.seeding import SAMPLER, derive_rng
from .edm import SamplerConfig, heun_sample, model_denoiser

logger = logging.getLogger(__name__)


def item_seeds(seed: int, count: int) -> np.ndarray:
    """Per-item generation seeds drawn from the run's sampler stream."""
    return derive_rng(seed, SAMPLER).integers(0, 2 ** 31 - 1, size=count, dtype=np.int64)


def item_latents(seeds: Sequence[int], shape) -> np.ndarray:
    """Standard-normal starting noise, one independent stream per item seed."""
    if len(seeds) == 0:
        return np.zeros((0,) + tuple(shape))
    return np.stack([derive_rng(int(s), SAMPLER, 0).standard_normal(tuple(shape)) for s in seeds])


def generate_signals(model: DenoiserModel, labels: Sequence[int], seeds: Sequence[int],
                     stats: NormalizationStats, codec: EmbeddingCodec, sampler: SamplerConfig = SamplerConfig(),
                     batch_size: int = 64, progress: Optional[Callable[[int], None]] = None) -> List[SignalWindow]:
    """
    Sample embedded images, invert them to windows and undo the normalization.

    Each item starts from the noise of its own seed, so results do not depend on
    batching. Every window is tagged with its conditioning label and seed.

    Args:
        model: Trained denoiser
        labels: Conditioning class id per item
        seeds: Generation seed per item
        stats: Normalization statistics the model was trained under
        codec: Embedding configuration of the training images
        sampler: Step count, schedule and solver
        batch_size: Items integrated together
        progress: Optional callback receiving the number of finished items

    Returns:
        One raw-scale synthetic window per label
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(seeds) != labels.shape[0]:
        raise DataValidationError("One seed is needed per generated item",
                                  details={"labels": int(labels.shape[0]), "seeds": len(seeds)})
    if labels.size and (labels.min() < 0 or labels.max() >= len(model.vocabulary)):
        raise DataValidationError(f"Labels outside the vocabulary {list(model.vocabulary.names)}",
                                  details={"valid": list(model.vocabulary.names)})
    if labels.size == 0:
        return []

    denoise = model_denoiser(model, batch_size=batch_size)
    windows: List[SignalWindow] = []
    for start in range(0, labels.shape[0], batch_size):
        part = labels[start:start + batch_size]
        part_seeds = [int(s) for s in seeds[start:start + batch_size]]
        latents = item_latents(part_seeds, codec.image_shape)
        pixels = heun_sample(denoise, part, codec.image_shape, sampler, latents=latents)
        for k in range(part.shape[0]):
            window = codec.decode(pixels[k].astype(np.float32), label=int(part[k]),
                                  source=SOURCE_SYNTHETIC, normalized=True, seed=part_seeds[k])
            windows.append(stats.denormalize_window(window))
        logger.debug(f"Generated {len(windows)}/{labels.shape[0]} windows")
        if progress is not None:
            progress(len(windows))
    return windows
