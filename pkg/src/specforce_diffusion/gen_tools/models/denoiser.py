"""
EDM preconditioning wrapper D_theta around the backbone F_theta.

    D(x; sigma, label) = c_skip * x + c_out * F(c_in * x, c_noise, label)
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..core.exceptions import ConfigurationError, TensorShapeError
from ..data.signals import LabelVocabulary
from ..tensor import ops
from ..tensor.layers import Module
from ..tensor.tensor import Tensor, as_tensor
from .unet import BackboneConfig, SongUNet

SIGMA_DATA = 0.5

Real = Union[float, np.ndarray]


@dataclass(frozen=True)
class PreconditioningCoeffs:
    sigma: Real
    sigma_data: float
    c_skip: Real
    c_out: Real
    c_in: Real
    c_noise: Real


def _validate_positive(name: str, value) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(array)) or np.any(array <= 0):
        raise ConfigurationError(f"{name} must be finite and strictly positive, got {value!r}",
                                 details={"name": name})
    return array


def precondition_coeffs(sigma: Real, sigma_data: float = SIGMA_DATA) -> PreconditioningCoeffs:
    """
    Evaluate the EDM preconditioning coefficients in 64-bit arithmetic.

    ``sigma`` may be a scalar or an array of per-sample noise levels; the
    coefficients have the same shape.

    Raises:
        ConfigurationError: If sigma or sigma_data is non-positive or non-finite
    """
    s = _validate_positive("sigma", sigma)
    sd = float(_validate_positive("sigma_data", sigma_data))
    c_in = 1.0 / np.sqrt(s * s + sd * sd)
    c_skip = sd * sd * c_in * c_in
    c_out = s * sd * c_in
    c_noise = np.log(s) / 4.0
    if s.ndim == 0:
        return PreconditioningCoeffs(float(s), sd, float(c_skip), float(c_out), float(c_in), float(c_noise))
    return PreconditioningCoeffs(s, sd, c_skip, c_out, c_in, c_noise)


def analytic_gaussian_denoiser(y: np.ndarray, sigma: Real, s: float) -> np.ndarray:
    """Posterior mean s^2/(s^2+sigma^2) * y of x0 ~ N(0, s^2 I) given y = x0 + N(0, sigma^2 I)."""
    sig = _validate_positive("sigma", sigma)
    s2 = float(_validate_positive("s", s)) ** 2
    y = np.asarray(y)
    gain = s2 / (s2 + sig * sig)
    if gain.ndim:
        gain = gain.reshape((-1,) + (1,) * (y.ndim - 1))
    return (gain * y).astype(y.dtype, copy=False)


def _per_sample(values: np.ndarray, ndim: int) -> np.ndarray:
    return values.reshape((-1,) + (1,) * (ndim - 1))


class DenoiserModel(Module):
    """Backbone parameters plus the preconditioning wrapper and the label vocabulary."""

    def __init__(self, config: BackboneConfig, vocabulary: LabelVocabulary, rng: np.random.Generator,
                 sigma_data: float = SIGMA_DATA):
        super().__init__()
        if config.num_classes != len(vocabulary):
            raise ConfigurationError(
                f"Backbone has {config.num_classes} classes but the vocabulary has {len(vocabulary)}",
                details={"num_classes": config.num_classes, "vocabulary": list(vocabulary.names)})
        self.logger = logging.getLogger(__name__)
        self.config = config
        self.vocabulary = vocabulary
        self.sigma_data = float(sigma_data)
        self.backbone = SongUNet(config, rng)
        self.logger.debug(f"Denoiser initialized with {self.parameter_count()} parameters")

    def _broadcast_sigma(self, sigma: Real, batch: int) -> np.ndarray:
        sig = np.asarray(sigma, dtype=np.float64).reshape(-1)
        if sig.size == 1:
            sig = np.full(batch, sig[0])
        if sig.size != batch:
            raise TensorShapeError(f"{sig.size} noise levels for a batch of {batch}",
                                   details={"sigma": int(sig.size), "batch": batch})
        return sig

    def backbone_forward(self, x: Tensor, c_noise: np.ndarray, labels: np.ndarray) -> Tensor:
        return self.backbone(x, c_noise, labels)

    def raw_output(self, x, sigma: Real, labels: np.ndarray) -> Tensor:
        """F_theta(c_in * x, c_noise, label), the network output before the skip mix."""
        x = as_tensor(x)
        coeffs = precondition_coeffs(self._broadcast_sigma(sigma, x.shape[0]), self.sigma_data)
        return self.backbone_forward(ops.scale(x, _per_sample(coeffs.c_in, x.ndim)), coeffs.c_noise, labels)

    def denoise(self, x, sigma: Real, labels: np.ndarray) -> Tensor:
        x = as_tensor(x)
        coeffs = precondition_coeffs(self._broadcast_sigma(sigma, x.shape[0]), self.sigma_data)
        f = self.backbone_forward(ops.scale(x, _per_sample(coeffs.c_in, x.ndim)), coeffs.c_noise, labels)
        return ops.add(ops.scale(x, _per_sample(coeffs.c_skip, x.ndim)),
                       ops.scale(f, _per_sample(coeffs.c_out, x.ndim)))

    forward = denoise

    def denoise_array(self, x: np.ndarray, sigma: Real, labels: np.ndarray,
                      batch_size: Optional[int] = None) -> np.ndarray:
        """Eval-mode denoising of a numpy batch, optionally in chunks; nothing is recorded."""
        was_training = self.training
        self.eval()
        try:
            sig = self._broadcast_sigma(sigma, x.shape[0])
            labels = np.asarray(labels).reshape(-1)
            step = batch_size or x.shape[0] or 1
            parts = [self.denoise(Tensor(x[i:i + step]), sig[i:i + step], labels[i:i + step]).data
                     for i in range(0, x.shape[0], step)]
            return np.concatenate(parts, axis=0) if parts else np.empty_like(x)
        finally:
            self.train(was_training)
