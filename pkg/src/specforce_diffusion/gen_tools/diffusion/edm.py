"""
EDM noise distribution, training loss, sigma schedule and probability-flow samplers.

The probability-flow ODE is integrated with sigma(t) = t, so the drift is
dx/dsigma = (x - D(x; sigma)) / sigma.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from ..core.exceptions import ConfigurationError, NonFiniteError
from ..models.denoiser import DenoiserModel, precondition_coeffs
from ..tensor import ops
from ..tensor.tensor import GradientTape, Tensor, get_default_dtype

logger = logging.getLogger(__name__)

SOLVERS = ("heun", "euler")

DenoiseFn = Callable[[np.ndarray, float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NoiseDistribution:
    """ln(sigma) ~ N(p_mean, p_std^2), clamped to [sigma_min, sigma_max]."""
    p_mean: float = -1.2
    p_std: float = 1.2
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    sigma_data: float = 0.5

    def validate(self) -> None:
        if self.p_std < 0 or not 0 < self.sigma_min < self.sigma_max or self.sigma_data <= 0:
            raise ConfigurationError("Invalid noise distribution", details=self.__dict__.copy())


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 18
    rho: float = 7.0
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    solver: str = "heun"

    def validate(self) -> None:
        if self.steps < 2:
            raise ConfigurationError("Sampler needs at least 2 steps", details={"steps": self.steps})
        if not 0 < self.sigma_min < self.sigma_max:
            raise ConfigurationError("Sampler requires sigma_max > sigma_min > 0",
                                     details={"sigma_min": self.sigma_min, "sigma_max": self.sigma_max})
        if self.rho <= 0:
            raise ConfigurationError("rho must be positive", details={"rho": self.rho})
        if self.solver not in SOLVERS:
            raise ConfigurationError(f"Unknown solver '{self.solver}'",
                                     details={"solver": self.solver, "valid": list(SOLVERS)})


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0
    checkpoint_every: int = 10
    weight_decay: float = 0.0
    decoupled: bool = True
    nonfinite_retries: int = 3
    nonfinite: str = "trap"

    def validate(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0 or self.checkpoint_every < 1:
            raise ConfigurationError("Training settings must be positive", details=self.__dict__.copy())


def sample_sigma(rng: np.random.Generator, dist: NoiseDistribution,
                 size: Optional[Union[int, Tuple[int, ...]]] = None) -> Union[float, np.ndarray]:
    """Draw sigma = exp(z), z ~ N(p_mean, p_std^2), clamped to [sigma_min, sigma_max]."""
    z = rng.normal(dist.p_mean, dist.p_std, size=size)
    sigma = np.clip(np.exp(z), dist.sigma_min, dist.sigma_max)
    return float(sigma) if size is None else sigma


def edm_target(clean: np.ndarray, noisy: np.ndarray, sigma, sigma_data: float) -> np.ndarray:
    """(y - c_skip * (y + n)) / c_out: the backbone output that makes D reproduce y exactly."""
    c = precondition_coeffs(sigma, sigma_data)
    shape = (-1,) + (1,) * (clean.ndim - 1)
    c_skip = np.reshape(c.c_skip, shape) if np.ndim(c.c_skip) else c.c_skip
    c_out = np.reshape(c.c_out, shape) if np.ndim(c.c_out) else c.c_out
    return (clean - c_skip * noisy) / c_out


def weighted_denoiser_loss(denoised: np.ndarray, clean: np.ndarray, sigma, sigma_data: float) -> np.ndarray:
    """Per-sample ||D - y||^2 / c_out^2, summed over all non-batch axes."""
    c = precondition_coeffs(sigma, sigma_data)
    diff = np.asarray(denoised, dtype=np.float64) - np.asarray(clean, dtype=np.float64)
    sq = (diff * diff).reshape(diff.shape[0], -1).sum(axis=1)
    return sq / np.square(c.c_out)


def edm_loss(model: DenoiserModel, images: np.ndarray, labels: np.ndarray, rng: np.random.Generator,
             dist: NoiseDistribution = NoiseDistribution()) -> Tuple[Tensor, GradientTape]:
    """
    Recorded EDM loss for one batch.

    Per sample, sigma is drawn from ``dist`` and n ~ N(0, sigma^2 I). The loss
    is ||F(c_in (y+n), c_noise, label) - target||^2 with the target from
    ``edm_target``, which equals ||D(y+n) - y||^2 / c_out^2, averaged over the batch.

    Returns:
        The scalar loss tensor and the tape it was recorded on

    Raises:
        NonFiniteError: If the loss is not finite
    """
    batch = images.shape[0]
    sigma = sample_sigma(rng, dist, size=batch)
    noise = rng.standard_normal(images.shape) * sigma.reshape((-1,) + (1,) * (images.ndim - 1))
    clean = images.astype(np.float64)
    noisy = clean + noise
    target = edm_target(clean, noisy, sigma, dist.sigma_data).astype(get_default_dtype())
    with GradientTape() as tape:
        out = model.raw_output(Tensor(noisy), sigma, labels)
        residual = ops.sub(out, Tensor(target))
        loss = ops.scale(ops.sum_all(ops.square(residual)), 1.0 / batch)
    if not np.isfinite(loss.item()):
        raise NonFiniteError("EDM loss is not finite",
                             details={"sigma_min": float(sigma.min()), "sigma_max": float(sigma.max())})
    return loss, tape


def sigma_steps(config: SamplerConfig) -> np.ndarray:
    """sigma_i = (s_max^(1/rho) + i/(T-1) (s_min^(1/rho) - s_max^(1/rho)))^rho for i < T, and sigma_T = 0."""
    config.validate()
    i = np.arange(config.steps, dtype=np.float64)
    inv = 1.0 / config.rho
    hi, lo = config.sigma_max ** inv, config.sigma_min ** inv
    sigmas = (hi + i / (config.steps - 1) * (lo - hi)) ** config.rho
    sigmas[0], sigmas[-1] = config.sigma_max, config.sigma_min
    return np.append(sigmas, 0.0)


def _check_state(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"Sampler state became non-finite at step {step}", details={"step": step})


def heun_sample(denoise: DenoiseFn, labels: np.ndarray, shape: Tuple[int, ...], config: SamplerConfig,
                rng: Optional[np.random.Generator] = None, latents: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Integrate the probability-flow ODE from sigma_max to 0.

    Args:
        denoise: ``denoise(x, sigma, labels) -> D(x; sigma)`` on a numpy batch
        labels: One class id per sample
        shape: Per-sample shape, e.g. (3, 64, 64)
        config: Schedule and solver; ``solver = "euler"`` skips the trapezoidal correction
        rng: Source of the initial noise when ``latents`` is not given
        latents: Standard-normal starting points (N, *shape); scaled by sigma_0

    Returns:
        Samples of shape (N, *shape), float64
    """
    sigmas = sigma_steps(config)
    labels = np.asarray(labels).reshape(-1)
    if latents is None:
        if rng is None:
            raise ConfigurationError("heun_sample needs either an rng or latents")
        latents = rng.standard_normal((labels.shape[0],) + tuple(shape))
    x = np.asarray(latents, dtype=np.float64) * sigmas[0]
    for i in range(config.steps):
        s, s_next = sigmas[i], sigmas[i + 1]
        d = (x - denoise(x, s, labels)) / s
        x_next = x + (s_next - s) * d
        if config.solver == "heun" and s_next > 0:
            d_next = (x_next - denoise(x_next, s_next, labels)) / s_next
            x_next = x + (s_next - s) * (0.5 * d + 0.5 * d_next)
        _check_state(x_next, i)
        x = x_next
    return x


def model_denoiser(model: DenoiserModel, batch_size: Optional[int] = None) -> DenoiseFn:
    """Adapt a trained denoiser to the sampler's numpy interface."""
    def denoise(x: np.ndarray, sigma: float, labels: np.ndarray) -> np.ndarray:
        out = model.denoise_array(x.astype(get_default_dtype()), sigma, labels, batch_size=batch_size)
        return out.astype(np.float64)
    return denoise
