"""
EDM training loop over embedded images.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from tqdm import tqdm

from ..core.exceptions import NonFiniteError, TrainingError
from ..models.denoiser import DenoiserModel
from ..tensor.optim import Adam, AdamHyperParams, OptimizerState
from ..utils.seeding import DATA_SHUFFLE, NOISE, derive_rng
from .edm import NoiseDistribution, TrainConfig, edm_loss

logger = logging.getLogger(__name__)

CheckpointHook = Callable[[int, DenoiserModel, OptimizerState, List[float]], None]


@dataclass
class TrainResult:
    history: List[float] = field(default_factory=list)
    epochs_completed: int = 0
    stopped_early: bool = False
    optimizer_state: Optional[OptimizerState] = None


def minibatches(count: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(count)
    return [order[i:i + batch_size] for i in range(0, count, batch_size)]


def train_denoiser(model: DenoiserModel, images: np.ndarray, labels: np.ndarray, config: TrainConfig,
                   dist: NoiseDistribution = NoiseDistribution(),
                   optimizer_state: Optional[OptimizerState] = None, start_epoch: int = 0,
                   history: Optional[List[float]] = None,
                   on_checkpoint: Optional[CheckpointHook] = None,
                   should_stop: Optional[Callable[[], bool]] = None,
                   progress: bool = True) -> TrainResult:
    """
    Train the denoiser with AdamW over seeded shuffled minibatches.

    Epoch ``e`` draws its shuffle and its noise from streams keyed by
    (seed, e), so a run resumed from a checkpoint at epoch ``e`` continues
    exactly as the uninterrupted run would.

    Args:
        model: Denoiser to train in place
        images: (N, C, H, W) normalized embedded images
        labels: (N,) class ids
        config: Learning rate, batch size, epochs, seed and checkpoint cadence
        dist: Noise-level distribution
        optimizer_state: Moments and step counter to resume from
        start_epoch: Number of epochs already completed
        history: Per-epoch mean losses of the completed epochs
        on_checkpoint: Called with (epoch, model, optimizer state, history) per cadence and at the end
        should_stop: Polled at every epoch boundary; True ends training after a final checkpoint

    Returns:
        TrainResult with the full loss history

    Raises:
        TrainingError: If the dataset is empty or the loss stays non-finite after the configured retries
    """
    config.validate()
    dist.validate()
    if images.shape[0] == 0:
        raise TrainingError("Cannot train the denoiser on an empty dataset")
    if labels.shape[0] != images.shape[0]:
        raise TrainingError("Image and label counts differ",
                            details={"images": int(images.shape[0]), "labels": int(labels.shape[0])})

    hyper = AdamHyperParams(lr=config.learning_rate, weight_decay=config.weight_decay,
                            decoupled=config.decoupled, nonfinite=config.nonfinite)
    optimizer = Adam(model.named_parameters(prefix=""), hyper)
    if optimizer_state is not None:
        optimizer.state = OptimizerState(hyper=hyper, step=optimizer_state.step,
                                         m=dict(optimizer_state.m), v=dict(optimizer_state.v))
    result = TrainResult(history=list(history or []), epochs_completed=start_epoch,
                         optimizer_state=optimizer.state)
    model.train()
    params = optimizer.parameters

    epochs = range(start_epoch, config.epochs)
    bar = tqdm(epochs, desc="diffusion", unit="epoch", disable=not progress)
    for epoch in bar:
        if should_stop is not None and should_stop():
            logger.info(f"Stop requested before epoch {epoch + 1}; writing a final checkpoint")
            result.stopped_early = True
            break
        shuffle_rng = derive_rng(config.seed, DATA_SHUFFLE, epoch)
        noise_rng = derive_rng(config.seed, NOISE, epoch)
        total, seen = 0.0, 0
        for idx in minibatches(images.shape[0], config.batch_size, shuffle_rng):
            for attempt in range(config.nonfinite_retries + 1):
                try:
                    loss, tape = edm_loss(model, images[idx], labels[idx], noise_rng, dist)
                    break
                except NonFiniteError as e:
                    logger.warning(f"Non-finite loss at epoch {epoch + 1} (attempt {attempt + 1}): {e.message}")
            else:
                raise TrainingError(f"Loss stayed non-finite after {config.nonfinite_retries} retries",
                                    details={"epoch": epoch + 1})
            optimizer.step(tape.gradient(loss, params))
            total += loss.item() * len(idx)
            seen += len(idx)
        mean_loss = total / seen
        result.history.append(mean_loss)
        result.epochs_completed = epoch + 1
        bar.set_postfix(loss=f"{mean_loss:.4f}")
        logger.info(f"Epoch {epoch + 1}/{config.epochs}: mean loss {mean_loss:.6f}")
        if on_checkpoint is not None and (epoch + 1) % config.checkpoint_every == 0:
            on_checkpoint(epoch + 1, model, optimizer.state, result.history)
    bar.close()

    result.optimizer_state = optimizer.state
    if on_checkpoint is not None and result.epochs_completed > start_epoch \
            and result.epochs_completed % config.checkpoint_every != 0:
        on_checkpoint(result.epochs_completed, model, optimizer.state, result.history)
    return result
