"""
Networks: the EDM denoiser with its UNet backbone and the placement classifiers.
"""

from .classifiers import VARIANTS, ClassifierConfig, PlacementClassifier, build_classifier
from .denoiser import (SIGMA_DATA, DenoiserModel, PreconditioningCoeffs, analytic_gaussian_denoiser,
                       precondition_coeffs)
from .training import (ClassificationReport, ClassifierTrainResult, TrainSpec, evaluate_classifier, predict_logits,
                       train_classifier)
from .unet import BackboneConfig, SongUNet, UNetBlock, positional_embedding

__all__ = [
    'VARIANTS',
    'ClassifierConfig',
    'PlacementClassifier',
    'build_classifier',
    'SIGMA_DATA',
    'DenoiserModel',
    'PreconditioningCoeffs',
    'analytic_gaussian_denoiser',
    'precondition_coeffs',
    'BackboneConfig',
    'SongUNet',
    'UNetBlock',
    'positional_embedding',
    'ClassificationReport',
    'ClassifierTrainResult',
    'TrainSpec',
    'evaluate_classifier',
    'predict_logits',
    'train_classifier',
]
