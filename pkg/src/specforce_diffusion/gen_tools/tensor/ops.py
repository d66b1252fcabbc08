"""
Primitive operations with their adjoints.

The primitive set is exactly what the denoiser backbone and the placement
classifiers need; there is no general broadcasting engine. Elementwise
binary primitives require equal shapes, and the few broadcast patterns in use
(per-channel bias, constant scaling) have their own primitives.

Layout conventions: images are (N, C, H, W), sequences are (N, C, L).
"""

import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..core.exceptions import TensorShapeError
from .tensor import Tensor, as_tensor, emit

Pair = Union[int, Tuple[int, int]]

# ---------------------------------------------------------------------------
# shape helpers


def _pair(value: Pair) -> Tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _require_same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise TensorShapeError(f"{name}: operand shapes differ {a.shape} vs {b.shape}",
                               details={"primitive": name, "dims": [list(a.shape), list(b.shape)]})


def _require_ndim(name: str, x: Tensor, ndim: int) -> None:
    if x.ndim != ndim:
        raise TensorShapeError(f"{name}: expected a rank-{ndim} input, got shape {x.shape}",
                               details={"primitive": name, "dims": list(x.shape)})


def _channel_view(v: np.ndarray, ndim: int) -> np.ndarray:
    """Reshape a (C,) vector to broadcast against (N, C, ...)."""
    return v.reshape((1, -1) + (1,) * (ndim - 2))


def _reduce_axes(ndim: int) -> Tuple[int, ...]:
    return (0,) + tuple(range(2, ndim))


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape("add", a, b)
    return emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape("sub", a, b)
    return emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape("mul", a, b)
    return emit("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, factor) -> Tensor:
    """Multiply by a constant (scalar or array broadcastable to ``x.shape``)."""
    x = as_tensor(x)
    f = np.asarray(factor, dtype=x.dtype)
    if np.broadcast_shapes(x.shape, f.shape) != x.shape:
        raise TensorShapeError(f"scale: factor of shape {f.shape} does not broadcast to {x.shape}",
                               details={"primitive": "scale", "dims": [list(x.shape), list(f.shape)]})
    return emit("scale", x.data * f, (x,), lambda g: (g * f,))


def shift(x: Tensor, offset) -> Tensor:
    """Add a constant (scalar or array broadcastable to ``x.shape``)."""
    x = as_tensor(x)
    c = np.asarray(offset, dtype=x.dtype)
    if np.broadcast_shapes(x.shape, c.shape) != x.shape:
        raise TensorShapeError(f"shift: offset of shape {c.shape} does not broadcast to {x.shape}",
                               details={"primitive": "shift", "dims": [list(x.shape), list(c.shape)]})
    return emit("shift", x.data + c, (x,), lambda g: (g,))


def square(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return emit("square", x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def add_channel(x: Tensor, v: Tensor) -> Tensor:
    """Add a per-sample, per-channel vector ``v`` (N, C) to ``x`` (N, C, ...)."""
    x, v = as_tensor(x), as_tensor(v)
    if v.ndim != 2 or x.shape[:2] != v.shape:
        raise TensorShapeError(f"add_channel: vector {v.shape} does not match leading dims of {x.shape}",
                               details={"primitive": "add_channel", "dims": [list(x.shape), list(v.shape)]})
    spatial = (1,) * (x.ndim - 2)
    axes = tuple(range(2, x.ndim))
    return emit("add_channel", x.data + v.data.reshape(v.shape + spatial), (x, v),
                lambda g: (g, g.sum(axis=axes)))


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return emit("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def silu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    return emit("silu", x.data * s, (x,), lambda g: (g * (s * (1.0 + x.data * (1.0 - s))),))


# ---------------------------------------------------------------------------
# structural


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError:
        raise TensorShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}",
                               details={"primitive": "reshape", "dims": [list(x.shape), list(shape)]})
    return emit("reshape", data, (x,), lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return emit("transpose", np.ascontiguousarray(x.data.transpose(axes)), (x,),
                lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)):
            raise TensorShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}",
                                   details={"primitive": "concat", "dims": [list(t.shape) for t in tensors]})
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def adjoint(g):
        return tuple(np.split(g, bounds, axis=axis))

    return emit("concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), adjoint)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    x = as_tensor(x)

    def adjoint(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return emit("slice_channels", np.ascontiguousarray(x.data[:, start:stop]), (x,), adjoint)


def embedding(ids: np.ndarray, table: Tensor) -> Tensor:
    """Row lookup ``table[ids]`` for integer ids."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise TensorShapeError(f"embedding: ids outside [0, {table.shape[0]})",
                               details={"primitive": "embedding", "dims": list(table.shape)})

    def adjoint(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return emit("embedding", table.data[ids], (table,), adjoint)


# ---------------------------------------------------------------------------
# reductions and losses


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return emit("sum", np.asarray(x.data.sum(), dtype=x.dtype), (x,),
                lambda g: (np.full(x.shape, g, dtype=x.dtype),))


def mean_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    return emit("mean", np.asarray(x.data.mean(), dtype=x.dtype), (x,),
                lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return emit("softmax", out, (x,),
                lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    return emit("log_softmax", out, (x,),
                lambda g: (g - np.exp(out) * g.sum(axis=axis, keepdims=True),))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(``logits``)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    _require_ndim("cross_entropy", logits, 2)
    if labels.shape != (logits.shape[0],):
        raise TensorShapeError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {logits.shape[0]} rows",
                               details={"primitive": "cross_entropy", "dims": [list(logits.shape), list(labels.shape)]})
    n = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def adjoint(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return (grad * (g / n),)

    return emit("cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), adjoint)


# ---------------------------------------------------------------------------
# dense layers


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` for x (N, I), weight (O, I), bias (O,)."""
    x, weight = as_tensor(x), as_tensor(weight)
    _require_ndim("linear", x, 2)
    if weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise TensorShapeError(f"linear: input {x.shape} does not match weight {weight.shape}",
                               details={"primitive": "linear", "dims": [list(x.shape), list(weight.shape)]})
    out = x.data @ weight.data.T
    inputs: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        out = out + bias.data
        inputs = (x, weight, bias)

    def adjoint(g):
        grads = [g @ weight.data, g.T @ x.data]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return emit("linear", out, inputs, adjoint)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; batch dims must match."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise TensorShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}",
                               details={"primitive": "matmul", "dims": [list(a.shape), list(b.shape)]})
    return emit("matmul", a.data @ b.data, (a, b),
                lambda g: (g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g))


# ---------------------------------------------------------------------------
# convolution

IM2COL_LIMIT = 1 << 24


def _conv_out(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray], stride: Tuple[int, int],
                   padding: Tuple[int, int]) -> np.ndarray:
    """Numpy convolution; im2col when the column buffer is small, else accumulation over kernel offsets."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    ho, wo = _conv_out(h, kh, sh, ph), _conv_out(wd, kw, sw, pw)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    if n * c * ho * wo * kh * kw <= IM2COL_LIMIT:
        windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))
    else:
        out = np.zeros((n, ho, wo, o), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw]
                out += np.tensordot(patch, w[:, :, i, j], axes=([1], [1]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if b is not None:
        out += b.reshape(1, -1, 1, 1)
    return out


def conv2d_backward(g: np.ndarray, x: np.ndarray, w: np.ndarray, stride: Tuple[int, int],
                    padding: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, c, h, wd = x.shape
    _, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    ho, wo = g.shape[2], g.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            rows = slice(i, i + sh * ho, sh)
            cols = slice(j, j + sw * wo, sw)
            gw[:, :, i, j] = np.tensordot(g, xp[:, :, rows, cols], axes=([0, 2, 3], [0, 2, 3]))
            gxp[:, :, rows, cols] += np.tensordot(g, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
    gx = gxp[:, :, ph:ph + h, pw:pw + wd]
    return np.ascontiguousarray(gx), gw, g.sum(axis=(0, 2, 3))


def conv2d_direct(x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray], stride: Pair = 1,
                  padding: Pair = 0) -> np.ndarray:
    """Per-output-pixel reference convolution, the correctness oracle for ``conv2d``."""
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho, wo = _conv_out(h, kh, sh, ph), _conv_out(wd, kw, sw, pw)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((n, o, ho, wo), dtype=x.dtype)
    for r in range(ho):
        for s in range(wo):
            patch = xp[:, :, r * sh:r * sh + kh, s * sw:s * sw + kw]
            out[:, :, r, s] = np.einsum("nchw,ochw->no", patch, w)
    if b is not None:
        out += b.reshape(1, -1, 1, 1)
    return out


def _check_conv(name: str, x: Tensor, w: Tensor, rank: int) -> None:
    _require_ndim(name, x, rank)
    if w.ndim != rank or w.shape[1] != x.shape[1]:
        raise TensorShapeError(f"{name}: input {x.shape} does not match weight {w.shape}",
                               details={"primitive": name, "dims": [list(x.shape), list(w.shape)]})


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: Pair = 1,
           padding: Pair = 0) -> Tensor:
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv("conv2d", x, weight, 4)
    st, pd = _pair(stride), _pair(padding)
    if _conv_out(x.shape[2], weight.shape[2], st[0], pd[0]) < 1 or _conv_out(x.shape[3], weight.shape[3], st[1], pd[1]) < 1:
        raise TensorShapeError(f"conv2d: kernel {weight.shape[2:]} larger than padded input {x.shape[2:]}",
                               details={"primitive": "conv2d", "dims": [list(x.shape), list(weight.shape)]})
    out = conv2d_forward(x.data, weight.data, None if bias is None else bias.data, st, pd)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def adjoint(g):
        gx, gw, gb = conv2d_backward(g, x.data, weight.data, st, pd)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return emit("conv2d", out, inputs, adjoint)


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """1-D convolution over (N, C, L), computed as a height-1 2-D convolution."""
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv("conv1d", x, weight, 3)
    if _conv_out(x.shape[2], weight.shape[2], stride, padding) < 1:
        raise TensorShapeError(f"conv1d: kernel {weight.shape[2]} larger than padded input {x.shape[2]}",
                               details={"primitive": "conv1d", "dims": [list(x.shape), list(weight.shape)]})
    st, pd = (1, int(stride)), (0, int(padding))
    x4 = x.data[:, :, None, :]
    w4 = weight.data[:, :, None, :]
    out = conv2d_forward(x4, w4, None if bias is None else bias.data, st, pd)[:, :, 0, :]
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def adjoint(g):
        gx, gw, gb = conv2d_backward(g[:, :, None, :], x4, w4, st, pd)
        gx, gw = gx[:, :, 0, :], gw[:, :, 0, :]
        return (gx, gw) if bias is None else (gx, gw, gb)

    return emit("conv1d", np.ascontiguousarray(out), inputs, adjoint)


def upsample_nearest2d(x: Tensor, factor: int = 2) -> Tensor:
    x = as_tensor(x)
    _require_ndim("upsample_nearest2d", x, 4)
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)
    return emit("upsample_nearest2d", out, (x,),
                lambda g: (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),))


# ---------------------------------------------------------------------------
# pooling


def _max_pool(name: str, x4: np.ndarray, kh: int, kw: int):
    n, c, h, w = x4.shape
    ho, wo = h // kh, w // kw
    if ho < 1 or wo < 1:
        raise TensorShapeError(f"{name}: input {x4.shape[2:]} smaller than pool window {(kh, kw)}",
                               details={"primitive": name, "dims": list(x4.shape)})
    blocks = (x4[:, :, :ho * kh, :wo * kw]
              .reshape(n, c, ho, kh, wo, kw)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, ho, wo, kh * kw))
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def scatter(g4: np.ndarray) -> np.ndarray:
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], g4[..., None], axis=-1)
        full = np.zeros_like(x4)
        full[:, :, :ho * kh, :wo * kw] = (gb.reshape(n, c, ho, wo, kh, kw)
                                          .transpose(0, 1, 2, 4, 3, 5)
                                          .reshape(n, c, ho * kh, wo * kw))
        return full

    return np.ascontiguousarray(out), scatter


def max_pool2d(x: Tensor, kernel: int = 2) -> Tensor:
    """Non-overlapping max pooling (stride = kernel, trailing remainder dropped)."""
    x = as_tensor(x)
    _require_ndim("max_pool2d", x, 4)
    out, scatter = _max_pool("max_pool2d", x.data, kernel, kernel)
    return emit("max_pool2d", out, (x,), lambda g: (scatter(g),))


def max_pool1d(x: Tensor, kernel: int = 2) -> Tensor:
    x = as_tensor(x)
    _require_ndim("max_pool1d", x, 3)
    out, scatter = _max_pool("max_pool1d", x.data[:, :, None, :], 1, kernel)
    return emit("max_pool1d", out[:, :, 0, :], (x,), lambda g: (scatter(g[:, :, None, :])[:, :, 0, :],))


def _adaptive_bins(size: int, out: int) -> List[Tuple[int, int]]:
    return [(int(math.floor(i * size / out)), int(math.ceil((i + 1) * size / out))) for i in range(out)]


def _adaptive_avg(name: str, x4: np.ndarray, oh: int, ow: int):
    n, c, h, w = x4.shape
    if h < 1 or w < 1:
        raise TensorShapeError(f"{name}: empty input", details={"primitive": name, "dims": list(x4.shape)})
    rows, cols = _adaptive_bins(h, oh), _adaptive_bins(w, ow)
    out = np.empty((n, c, oh, ow), dtype=x4.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[:, :, i, j] = x4[:, :, r0:r1, c0:c1].mean(axis=(2, 3))

    def spread(g4: np.ndarray) -> np.ndarray:
        full = np.zeros_like(x4)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                full[:, :, r0:r1, c0:c1] += g4[:, :, i:i + 1, j:j + 1] / ((r1 - r0) * (c1 - c0))
        return full

    return out, spread


def adaptive_avg_pool2d(x: Tensor, output_size: Pair) -> Tensor:
    x = as_tensor(x)
    _require_ndim("adaptive_avg_pool2d", x, 4)
    oh, ow = _pair(output_size)
    out, spread = _adaptive_avg("adaptive_avg_pool2d", x.data, oh, ow)
    return emit("adaptive_avg_pool2d", out, (x,), lambda g: (spread(g),))


def adaptive_avg_pool1d(x: Tensor, output_size: int) -> Tensor:
    x = as_tensor(x)
    _require_ndim("adaptive_avg_pool1d", x, 3)
    out, spread = _adaptive_avg("adaptive_avg_pool1d", x.data[:, :, None, :], 1, int(output_size))
    return emit("adaptive_avg_pool1d", out[:, :, 0, :], (x,), lambda g: (spread(g[:, :, None, :])[:, :, 0, :],))


# ---------------------------------------------------------------------------
# normalization and regularization


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """
    Batch normalization over every axis except the channel axis.

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, as usual); in eval mode the frozen
    running statistics are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim < 3 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise TensorShapeError(f"batch_norm: input {x.shape} does not match affine {gamma.shape}",
                               details={"primitive": "batch_norm", "dims": [list(x.shape), list(gamma.shape)]})
    axes = _reduce_axes(x.ndim)
    g_b = _channel_view(gamma.data, x.ndim)
    if training:
        count = x.data.size // x.shape[1]
        mu = x.data.mean(axis=axes, keepdims=True)
        centered = x.data - mu
        var = (centered * centered).mean(axis=axes, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std
        unbiased = var.reshape(-1) * (count / (count - 1) if count > 1 else 1.0)
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mu.reshape(-1)
        running_var *= (1.0 - momentum)
        running_var += momentum * unbiased

        def adjoint(g):
            gxhat = g * g_b
            gx = (inv_std / count) * (count * gxhat
                                      - gxhat.sum(axis=axes, keepdims=True)
                                      - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True))
            return gx.astype(x.dtype, copy=False), (g * xhat).sum(axis=axes), g.sum(axis=axes)
    else:
        inv_std = (1.0 / np.sqrt(_channel_view(running_var, x.ndim) + eps)).astype(x.dtype)
        xhat = (x.data - _channel_view(running_mean, x.ndim).astype(x.dtype)) * inv_std

        def adjoint(g):
            return g * g_b * inv_std, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = (xhat * g_b + _channel_view(beta.data, x.ndim)).astype(x.dtype, copy=False)
    return emit("batch_norm", out, (x, gamma, beta), adjoint)


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n, c = x.shape[0], x.shape[1]
    if x.ndim < 3 or c % groups or gamma.shape != (c,) or beta.shape != (c,):
        raise TensorShapeError(f"group_norm: {c} channels cannot form {groups} groups with affine {gamma.shape}",
                               details={"primitive": "group_norm", "dims": [list(x.shape), list(gamma.shape)]})
    xr = x.data.reshape(n, groups, -1)
    count = xr.shape[2]
    mu = xr.mean(axis=2, keepdims=True)
    centered = xr - mu
    var = (centered * centered).mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat_r = centered * inv_std
    xhat = xhat_r.reshape(x.shape)
    g_b = _channel_view(gamma.data, x.ndim)
    axes = _reduce_axes(x.ndim)

    def adjoint(g):
        gxhat = (g * g_b).reshape(n, groups, -1)
        gx = (inv_std / count) * (count * gxhat
                                  - gxhat.sum(axis=2, keepdims=True)
                                  - xhat_r * (gxhat * xhat_r).sum(axis=2, keepdims=True))
        return gx.reshape(x.shape).astype(x.dtype, copy=False), (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = (xhat * g_b + _channel_view(beta.data, x.ndim)).astype(x.dtype, copy=False)
    return emit("group_norm", out, (x, gamma, beta), adjoint)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; the identity (same tensor, nothing recorded) in eval mode or at rate 0."""
    x = as_tensor(x)
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return emit("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# attention


def attention(q: Tensor, k: Tensor, v: Tensor, return_weights: bool = False):
    """
    Scaled dot-product attention over flattened spatial positions.

    Args:
        q, k, v: (N, C, P) tensors, P = H * W

    Returns:
        (N, C, P) output, plus the (N, P, P) softmax weights when ``return_weights``
    """
    if not (q.shape == k.shape == v.shape) or q.ndim != 3:
        raise TensorShapeError(f"attention: q/k/v shapes differ {q.shape}, {k.shape}, {v.shape}",
                               details={"primitive": "attention", "dims": [list(q.shape), list(k.shape), list(v.shape)]})
    logits = scale(matmul(transpose(q, (0, 2, 1)), k), 1.0 / math.sqrt(q.shape[1]))
    weights = softmax(logits, axis=-1)
    out = matmul(v, transpose(weights, (0, 2, 1)))
    return (out, weights) if return_weights else out
