"""
EDM diffusion: loss, schedule, samplers, training and signal generation.
"""

from .edm import (SOLVERS, NoiseDistribution, SamplerConfig, TrainConfig, edm_loss, edm_target, heun_sample,
                  model_denoiser, sample_sigma, sigma_steps, weighted_denoiser_loss)
from .generation import generate_signals, item_latents, item_seeds
from .training import TrainResult, train_denoiser

__all__ = [
    'SOLVERS',
    'NoiseDistribution',
    'SamplerConfig',
    'TrainConfig',
    'edm_loss',
    'edm_target',
    'heun_sample',
    'model_denoiser',
    'sample_sigma',
    'sigma_steps',
    'weighted_denoiser_loss',
    'generate_signals',
    'item_latents',
    'item_seeds',
    'TrainResult',
    'train_denoiser',
]
