"""
Exact t-SNE (O(N^2) affinities and gradients).
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from tqdm import tqdm

from ..core.exceptions import EvaluationError
from ..utils.seeding import TSNE, derive_rng

logger = logging.getLogger(__name__)

MAX_POINTS = 5000
DUPLICATE_JITTER = 1e-10


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    entropy_tolerance: float = 1e-4
    seed: int = 0


@dataclass
class TsneResult:
    coords: np.ndarray
    jittered: bool = False
    kl_divergence: float = float("nan")


def squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _row_entropy(dist: np.ndarray, beta: float) -> Tuple[float, np.ndarray]:
    logits = -dist * beta
    logits -= logits.max()
    p = np.exp(logits)
    total = p.sum()
    p /= total
    # H = log(sum exp(-beta d)) + beta <d>, evaluated on the shifted logits
    entropy = float(-(p * logits).sum() + np.log(total))
    return entropy, p


def conditional_affinities(dist: np.ndarray, perplexity: float, tol: float = 1e-4,
                           max_iter: int = 200) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-wise Gaussian conditionals p_{j|i} whose entropy matches log(perplexity).

    The precision beta_i = 1 / (2 sigma_i^2) is found by bisection until the
    entropy (nats) is within ``tol`` of the target.

    Returns:
        (P, beta): the N x N row-stochastic conditional matrix and the precisions
    """
    n = dist.shape[0]
    target = np.log(perplexity)
    p = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        others = np.r_[0:i, i + 1:n]
        row = dist[i, others]
        beta, lo, hi = 1.0, 0.0, np.inf
        entropy, probs = _row_entropy(row, beta)
        for _ in range(max_iter):
            gap = entropy - target
            if abs(gap) <= tol:
                break
            if gap > 0:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            entropy, probs = _row_entropy(row, beta)
        else:
            logger.debug(f"Perplexity bisection for point {i} stopped at entropy gap {entropy - target:.2e}")
        p[i, others] = probs
        betas[i] = beta
    return p, betas


def joint_affinities(conditional: np.ndarray) -> np.ndarray:
    n = conditional.shape[0]
    p = (conditional + conditional.T) / (2.0 * n)
    return np.maximum(p, 1e-12)


def tsne_gradient(p: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """KL(P||Q) gradient 4 sum_j (p_ij - q_ij)(1 + |y_i - y_j|^2)^-1 (y_i - y_j), and Q."""
    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), 1e-12)
    weights = (p - q) * num
    np.fill_diagonal(weights, 0.0)
    grad = 4.0 * (weights.sum(axis=1)[:, None] * y - weights @ y)
    return grad, q


def tsne(features: np.ndarray, config: TsneConfig = TsneConfig(), progress: bool = False) -> TsneResult:
    """
    Embed ``features`` in two dimensions.

    Raises:
        EvaluationError: If there are too many points or the perplexity is infeasible
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if n > MAX_POINTS:
        raise EvaluationError(f"Exact t-SNE is limited to {MAX_POINTS} points, got {n}",
                              details={"points": n, "limit": MAX_POINTS})
    if not config.perplexity < (n - 1) / 3.0:
        raise EvaluationError(f"Perplexity {config.perplexity} is infeasible for {n} points; "
                              f"it must be below (N - 1) / 3 = {(n - 1) / 3.0:.2f}",
                              details={"perplexity": config.perplexity, "points": n})
    rng = derive_rng(config.seed, TSNE)
    dist = squared_distances(x)
    off = dist[~np.eye(n, dtype=bool)]
    jittered = bool(np.any(off <= 0.0))
    if jittered:
        logger.warning(f"Duplicate points in t-SNE input; adding seeded jitter {DUPLICATE_JITTER:g}")
        x = x + DUPLICATE_JITTER * rng.standard_normal(x.shape)
        dist = squared_distances(x)

    conditional, _ = conditional_affinities(dist, config.perplexity, config.entropy_tolerance)
    p = joint_affinities(conditional)
    y = 1e-4 * rng.standard_normal((n, 2))
    velocity = np.zeros_like(y)
    momentum = config.momentum

    for it in tqdm(range(1, config.iterations + 1), desc="t-SNE", unit="iter", disable=not progress):
        exaggerate = it <= config.exaggeration_iters
        grad, _ = tsne_gradient(p * config.early_exaggeration if exaggerate else p, y)
        velocity = momentum * velocity - config.learning_rate * grad
        y = y + velocity
        y -= y.mean(axis=0, keepdims=True)
        if it == config.momentum_switch:
            momentum = config.final_momentum
    _, q = tsne_gradient(p, y)
    kl = float(np.sum(p * np.log(p / q)))
    logger.info(f"t-SNE finished {config.iterations} iterations on {n} points (KL {kl:.4f})")
    return TsneResult(coords=y - y.mean(axis=0, keepdims=True), jittered=jittered, kl_divergence=kl)
