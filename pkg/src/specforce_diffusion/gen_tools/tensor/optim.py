"""
Adam / AdamW optimizer state and update step.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..core.exceptions import NonFiniteError, TensorShapeError
from .tensor import Parameter

logger = logging.getLogger(__name__)

NONFINITE_POLICIES = ("trap", "skip")


@dataclass(frozen=True)
class AdamHyperParams:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled: bool = False
    nonfinite: str = "trap"


@dataclass
class OptimizerState:
    """First/second moments per named parameter plus the step counter."""
    hyper: AdamHyperParams
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def tensors(self) -> Dict[str, np.ndarray]:
        out = {f"optimizer/m/{k}": a for k, a in self.m.items()}
        out.update({f"optimizer/v/{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_tensors(cls, hyper: AdamHyperParams, step: int, tensors: Dict[str, np.ndarray]) -> "OptimizerState":
        state = cls(hyper=hyper, step=int(step))
        for key, value in tensors.items():
            if key.startswith("optimizer/m/"):
                state.m[key[len("optimizer/m/"):]] = value.copy()
            elif key.startswith("optimizer/v/"):
                state.v[key[len("optimizer/v/"):]] = value.copy()
        return state


def optimizer_step(state: OptimizerState, params: Sequence[Tuple[str, Parameter]],
                   grads: Sequence[np.ndarray]) -> bool:
    """
    Apply one Adam update in place.

    Weight decay is decoupled (AdamW, ``p -= lr * wd * p``) or added to the
    gradient (Adam with L2) depending on ``hyper.decoupled``.

    Returns:
        True if the update was applied, False if it was skipped for non-finite gradients

    Raises:
        TensorShapeError: If a gradient or moment does not match its parameter
        NonFiniteError: On non-finite gradients under the ``trap`` policy
    """
    h = state.hyper
    if len(params) != len(grads):
        raise TensorShapeError(f"{len(grads)} gradients for {len(params)} parameters",
                               details={"params": len(params), "grads": len(grads)})
    for (name, p), g in zip(params, grads):
        if g.shape != p.shape:
            raise TensorShapeError(f"Gradient for {name} has shape {g.shape}, parameter {p.shape}",
                                   details={"name": name})
    bad = [name for (name, _), g in zip(params, grads) if not np.all(np.isfinite(g))]
    if bad:
        if h.nonfinite == "skip":
            logger.warning(f"Skipping optimizer step {state.step + 1}: non-finite gradients in {bad[:5]}")
            return False
        raise NonFiniteError(f"Non-finite gradients at step {state.step + 1}", details={"parameters": bad})

    state.step += 1
    t = state.step
    bc1 = 1.0 - h.beta1 ** t
    bc2 = 1.0 - h.beta2 ** t
    for (name, p), g in zip(params, grads):
        g = g.astype(np.float64)
        data = p.data.astype(np.float64)
        if h.weight_decay:
            if h.decoupled:
                data = data - h.lr * h.weight_decay * data
            else:
                g = g + h.weight_decay * data
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape, dtype=np.float64)
            v = state.v[name] = np.zeros(p.shape, dtype=np.float64)
        elif m.shape != p.shape:
            raise TensorShapeError(f"Moment for {name} has shape {m.shape}, parameter {p.shape}",
                                   details={"name": name})
        m *= h.beta1
        m += (1.0 - h.beta1) * g
        v *= h.beta2
        v += (1.0 - h.beta2) * g * g
        data = data - h.lr * (m / bc1) / (np.sqrt(v / bc2) + h.eps)
        p.data = data.astype(p.dtype)
    return True


class Adam:
    """Adam/AdamW over a module's named parameters."""

    def __init__(self, named_params: List[Tuple[str, Parameter]], hyper: AdamHyperParams):
        self.named_params = named_params
        self.state = OptimizerState(hyper=hyper)

    @property
    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_params]

    def step(self, grads: Sequence[np.ndarray]) -> bool:
        return optimizer_step(self.state, self.named_params, grads)
