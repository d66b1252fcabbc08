"""
Numpy tensor engine: tensors, gradient tape, primitives, layers and optimizers.
"""

from . import ops
from .gradcheck import max_relative_error
from .layers import (BatchNorm, Conv1d, Conv2d, Dropout, Embedding, GroupNorm, Linear, Module,
                     group_count, init_weight)
from .optim import Adam, AdamHyperParams, OptimizerState, optimizer_step
from .tensor import (GradientTape, Parameter, Tensor, as_tensor, backward, current_tape, default_dtype,
                     get_default_dtype, set_default_dtype, set_nonfinite_trap)

__all__ = [
    'ops',
    'Tensor',
    'Parameter',
    'GradientTape',
    'as_tensor',
    'backward',
    'current_tape',
    'default_dtype',
    'get_default_dtype',
    'set_default_dtype',
    'set_nonfinite_trap',
    'Module',
    'Linear',
    'Conv1d',
    'Conv2d',
    'BatchNorm',
    'GroupNorm',
    'Dropout',
    'Embedding',
    'group_count',
    'init_weight',
    'Adam',
    'AdamHyperParams',
    'OptimizerState',
    'optimizer_step',
    'max_relative_error',
]
