"""
Real-vs-synthetic evaluation: distribution metrics, t-SNE and the cross-evaluation report.
"""

from .cross_evaluation import (TAG_REAL, TAG_SYNTHETIC, CrossEvaluationConfig, EvaluationReport, FidResult,
                               TsneCoordinates, cross_evaluate, extract_features, fid_score)
from .metrics import FeatureSet, GaussianFit, PdfComparison, fit_gaussian, frechet_distance, pdf_compare, sqrt_psd
from .tsne import TsneConfig, TsneResult, conditional_affinities, joint_affinities, tsne, tsne_gradient

__all__ = [
    'TAG_REAL',
    'TAG_SYNTHETIC',
    'CrossEvaluationConfig',
    'EvaluationReport',
    'FidResult',
    'TsneCoordinates',
    'cross_evaluate',
    'extract_features',
    'fid_score',
    'FeatureSet',
    'GaussianFit',
    'PdfComparison',
    'fit_gaussian',
    'frechet_distance',
    'pdf_compare',
    'sqrt_psd',
    'TsneConfig',
    'TsneResult',
    'conditional_affinities',
    'joint_affinities',
    'tsne',
    'tsne_gradient',
]
