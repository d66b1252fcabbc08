"""
Dense tensors and the gradient tape.

Tensors wrap contiguous row-major numpy arrays. While a ``GradientTape`` is
active on the current thread, every primitive that has at least one input
requiring gradients appends a record (output, inputs, adjoint closure) to it.
Replaying the records in reverse order yields gradients for every parameter
reachable from the loss. Tapes are per-thread, so independent tapes can run on
independent threads.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import NonFiniteError, TapeError

logger = logging.getLogger(__name__)

_state = threading.local()
_settings = {"dtype": np.dtype(np.float32), "nonfinite_trap": False}


def get_default_dtype() -> np.dtype:
    return _settings["dtype"]


def set_default_dtype(dtype) -> None:
    """Switch the engine between 32-bit (default) and 64-bit (verification) reals."""
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported engine dtype {dtype}; use float32 or float64")
    _settings["dtype"] = dtype


@contextmanager
def default_dtype(dtype) -> Iterator[None]:
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def set_nonfinite_trap(enabled: bool) -> None:
    _settings["nonfinite_trap"] = bool(enabled)


def check_finite(name: str, data: np.ndarray) -> None:
    if _settings["nonfinite_trap"] and np.issubdtype(data.dtype, np.floating) and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"Primitive '{name}' produced non-finite values",
                             details={"primitive": name, "shape": list(data.shape)})


class Tensor:
    """A dense array that can take part in recorded forward passes."""

    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        array = np.asarray(data)
        if np.issubdtype(array.dtype, np.floating) and array.dtype != get_default_dtype():
            array = array.astype(get_default_dtype())
        self.data = np.ascontiguousarray(array)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


class Parameter(Tensor):
    """A trainable tensor; always requires gradients."""

    __slots__ = ()

    def __init__(self, data, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


Adjoint = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class TapeRecord(NamedTuple):
    primitive: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    adjoint: Adjoint


class GradientTape:
    """Ordered record of executed primitives and the closures that invert them."""

    def __init__(self):
        self.records: List[TapeRecord] = []

    def __enter__(self) -> "GradientTape":
        stack = getattr(_state, "tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _state.tapes.pop()

    @property
    def primitives(self) -> List[str]:
        return [r.primitive for r in self.records]

    def record(self, primitive: str, output: Tensor, inputs: Sequence[Tensor], adjoint: Adjoint) -> None:
        self.records.append(TapeRecord(primitive, output, tuple(inputs), adjoint))

    def gradient(self, loss: Tensor, parameters: Sequence[Tensor],
                 loss_adjoint: Optional[np.ndarray] = None) -> List[np.ndarray]:
        """
        Replay adjoints in reverse order.

        Args:
            loss: Output tensor recorded on this tape (scalar unless ``loss_adjoint`` is given)
            parameters: Tensors to return gradients for, in order
            loss_adjoint: Seed gradient for ``loss``; defaults to ones for a scalar loss

        Returns:
            One gradient array per parameter; parameters the loss does not depend on get zeros

        Raises:
            TapeError: If the loss was not produced on this tape or the adjoint shape is wrong
        """
        if not any(r.output is loss for r in self.records):
            raise TapeError("Loss tensor was not recorded on this tape",
                            details={"records": len(self.records)})
        if loss_adjoint is None:
            if loss.data.size != 1:
                raise TapeError(f"Non-scalar loss of shape {loss.shape} needs an explicit adjoint",
                                details={"shape": list(loss.shape)})
            seed = np.ones_like(loss.data)
        else:
            seed = np.asarray(loss_adjoint, dtype=loss.dtype).reshape(loss.shape)

        grads: Dict[int, np.ndarray] = {id(loss): seed}
        for record in reversed(self.records):
            g = grads.pop(id(record.output), None)
            if g is None:
                continue
            for tensor, partial in zip(record.inputs, record.adjoint(g)):
                if partial is None or not tensor.requires_grad:
                    continue
                if partial.shape != tensor.shape:
                    raise TapeError(
                        f"Adjoint of '{record.primitive}' returned shape {partial.shape} for input {tensor.shape}",
                        details={"primitive": record.primitive})
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + partial
                else:
                    grads[key] = partial

        result = []
        for p in parameters:
            g = grads.get(id(p))
            if g is None:
                logger.debug(f"Parameter {p.name or p.shape} is unreachable from the loss; zero gradient")
                g = np.zeros_like(p.data)
            result.append(g.astype(p.dtype, copy=False))
        return result


def current_tape() -> Optional[GradientTape]:
    stack = getattr(_state, "tapes", None)
    return stack[-1] if stack else None


def emit(primitive: str, data: np.ndarray, inputs: Sequence[Tensor], adjoint: Adjoint) -> Tensor:
    """Wrap a primitive's result and record it on the active tape when gradients can flow."""
    check_finite(primitive, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.name = None
    tape = current_tape()
    if tape is not None and out.requires_grad:
        tape.record(primitive, out, inputs, adjoint)
    return out


def backward(tape: GradientTape, loss: Tensor, parameters: Sequence[Tensor],
             loss_adjoint: Optional[np.ndarray] = None) -> List[np.ndarray]:
    """Functional form of ``GradientTape.gradient``."""
    return tape.gradient(loss, parameters, loss_adjoint)
