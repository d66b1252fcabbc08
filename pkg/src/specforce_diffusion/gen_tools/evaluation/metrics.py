"""
Distribution distances between real and synthetic data.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import jensenshannon
from scipy.stats import wasserstein_distance

from ..core.exceptions import EvaluationError

logger = logging.getLogger(__name__)

EIGEN_TOLERANCE = 1e-8
SHRINKAGE = 1e-6
DEFAULT_BINS = 100


@dataclass
class FeatureSet:
    """Samples x features matrix tagged with where it came from."""
    matrix: np.ndarray
    source: str
    extractor: str = "image-classifier/penultimate"
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise EvaluationError(f"Features must be a 2-D matrix, got shape {self.matrix.shape}",
                                  details={"shape": list(self.matrix.shape)})
        if not np.all(np.isfinite(self.matrix)):
            raise EvaluationError(f"Feature set '{self.source}' holds non-finite values",
                                  details={"source": self.source})

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return int(self.matrix.shape[0])


@dataclass
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray
    samples: int = 0
    shrinkage: float = 0.0

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


def fit_gaussian(features: np.ndarray, shrinkage: Optional[float] = SHRINKAGE) -> GaussianFit:
    """
    Two-pass mean and unbiased covariance.

    When there are fewer than dim + 1 samples the covariance is singular;
    ``shrinkage`` is then added to the diagonal and recorded on the fit. Pass
    ``shrinkage=None`` to refuse such inputs instead.

    Raises:
        EvaluationError: On fewer than two samples, or too few samples without shrinkage
    """
    x = np.asarray(features, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise EvaluationError("A Gaussian fit needs at least two samples", details={"samples": n})
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    applied = 0.0
    if n < d + 1:
        if shrinkage is None:
            raise EvaluationError(f"{n} samples cannot estimate a {d}-dimensional covariance",
                                  details={"samples": n, "dim": d})
        cov = cov + shrinkage * np.eye(d)
        applied = float(shrinkage)
        logger.warning(f"Only {n} samples for {d} feature dims; diagonal loading {shrinkage:g} applied")
    return GaussianFit(mean=mean, cov=cov, samples=n, shrinkage=applied)


def _clamped_eigh(matrix: np.ndarray):
    values, vectors = eigh(0.5 * (matrix + matrix.T))
    if values.size and values.min() < -EIGEN_TOLERANCE * max(1.0, abs(values).max()):
        logger.debug(f"Clamping negative eigenvalue {values.min():.3e} to zero")
    return np.clip(values, 0.0, None), vectors


def sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root through the eigendecomposition, negative eigenvalues clamped to 0."""
    values, vectors = _clamped_eigh(matrix)
    return (vectors * np.sqrt(values)) @ vectors.T


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)."""
    if a.dim != b.dim:
        raise EvaluationError(f"Cannot compare {a.dim}-D and {b.dim}-D Gaussians",
                              details={"dims": [a.dim, b.dim]})
    root_a = sqrt_psd(a.cov)
    inner, _ = _clamped_eigh(root_a @ b.cov @ root_a)
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sqrt(inner).sum())
    return max(value, 0.0)


@dataclass
class PdfComparison:
    bin_centers: np.ndarray
    real_density: np.ndarray
    synth_density: np.ndarray
    js_divergence: float
    wasserstein: float


def pdf_compare(real: np.ndarray, synthetic: np.ndarray, bins: int = DEFAULT_BINS) -> PdfComparison:
    """
    Histogram both sample sets over their pooled range and compare them.

    The Jensen-Shannon divergence (nats) is taken between the binned
    probability masses; Wasserstein-1 uses the raw samples.
    """
    real = np.asarray(real, dtype=np.float64).reshape(-1)
    synthetic = np.asarray(synthetic, dtype=np.float64).reshape(-1)
    if real.size == 0 or synthetic.size == 0:
        raise EvaluationError("PDF comparison needs non-empty sample sets",
                              details={"real": int(real.size), "synthetic": int(synthetic.size)})
    lo = min(real.min(), synthetic.min())
    hi = max(real.max(), synthetic.max())
    edges = np.histogram_bin_edges(np.concatenate([real, synthetic]), bins=bins, range=(lo, hi))
    real_counts, _ = np.histogram(real, bins=edges)
    synth_counts, _ = np.histogram(synthetic, bins=edges)
    widths = np.diff(edges)
    real_mass = real_counts / real_counts.sum()
    synth_mass = synth_counts / synth_counts.sum()
    js = float(jensenshannon(real_mass, synth_mass) ** 2)
    return PdfComparison(bin_centers=0.5 * (edges[:-1] + edges[1:]),
                         real_density=real_mass / widths, synth_density=synth_mass / widths,
                         js_divergence=min(max(js, 0.0), float(np.log(2.0))),
                         wasserstein=float(wasserstein_distance(real, synthetic)))
