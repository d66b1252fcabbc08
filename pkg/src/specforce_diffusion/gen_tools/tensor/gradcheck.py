"""
Central finite-difference verification of recorded gradients.
"""

from typing import Callable, Sequence

import numpy as np

from .tensor import GradientTape, Tensor


def max_relative_error(fn: Callable[[], Tensor], inputs: Sequence[Tensor], rng: np.random.Generator,
                       checks: int = 200, eps: float = 1e-6, floor: float = 1e-8) -> float:
    """
    Compare tape gradients with central differences at randomly drawn coordinates.

    ``fn`` must rebuild the scalar output from ``inputs`` on every call; the
    inputs are perturbed in place and restored. The relative error at one coordinate is
    |analytic - numeric| / max(|analytic| + |numeric|, floor).

    Returns:
        The worst relative error over all ``checks`` coordinates
    """
    with GradientTape() as tape:
        out = fn()
    analytic = tape.gradient(out, inputs)

    sizes = np.array([t.data.size for t in inputs], dtype=np.float64)
    worst = 0.0
    for _ in range(checks):
        which = int(rng.choice(len(inputs), p=sizes / sizes.sum()))
        tensor = inputs[which]
        flat = tensor.data.reshape(-1)
        idx = int(rng.integers(flat.size))
        original = flat[idx]
        flat[idx] = original + eps
        plus = float(fn().data)
        flat[idx] = original - eps
        minus = float(fn().data)
        flat[idx] = original
        numeric = (plus - minus) / (2.0 * eps)
        exact = float(analytic[which].reshape(-1)[idx])
        err = abs(exact - numeric) / max(abs(exact) + abs(numeric), floor)
        worst = max(worst, err)
    return worst
