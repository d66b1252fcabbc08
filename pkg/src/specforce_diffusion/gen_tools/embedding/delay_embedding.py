"""
Delay embedding between fixed-length signals and multi-channel images.

A length-L channel becomes an n x q matrix whose column j holds the samples
[s_j, s_j + n). Column starts advance by the skip m, except the last column,
which is pinned to L - n so the tail of the signal is always covered. Every
operation here is a pure rearrangement: values are copied, never combined
(except by the opt-in ``mean`` inversion mode), so round trips are bit-exact
and the input dtype is preserved.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import EmbeddingError
from ..data.signals import CHANNEL_NAMES, SOURCE_REAL, SignalWindow

logger = logging.getLogger(__name__)

INVERSION_MODES = ("first", "mean")
PADDING_CHECKS = ("error", "warn", "ignore")
PAD_ANCHORS = ("bottom_right", "center")


@dataclass(frozen=True)
class EmbeddingParams:
    """Delay-embedding configuration: skip ``m``, column height ``n``, signal length ``length``."""
    m: int
    n: int
    length: int

    def __post_init__(self):
        m, n, length = self.m, self.n, self.length
        if not all(isinstance(v, (int, np.integer)) for v in (m, n, length)):
            raise EmbeddingError("Embedding parameters must be integers",
                                 details={"m": m, "n": n, "length": length})
        if not 1 <= m <= n <= length:
            raise EmbeddingError(f"Embedding parameters must satisfy 1 <= m <= n <= L, got m={m}, n={n}, L={length}",
                                 details={"m": m, "n": n, "length": length})
        starts = _raw_starts(m, n, length)
        if starts[0] != 0 or starts[-1] != length - n:
            raise EmbeddingError(
                f"Column starts {starts[0]}..{starts[-1]} do not span [0, {length - n}]",
                details={"first_start": starts[0], "last_start": starts[-1], "expected_last": length - n})
        gaps = np.diff(np.asarray(starts))
        bad = np.nonzero(gaps > n)[0]
        if bad.size:
            j = int(bad[0])
            raise EmbeddingError(
                f"Coverage violation: columns {j} and {j + 1} start {int(gaps[j])} samples apart (> n={n})",
                details={"column": j, "starts": [starts[j], starts[j + 1]], "n": n})

    @property
    def q(self) -> int:
        """Column count, ceil((L - n) / m), or 1 when L == n."""
        return _column_count(self.m, self.n, self.length)

    @property
    def starts(self) -> Tuple[int, ...]:
        return tuple(_raw_starts(self.m, self.n, self.length))


def _column_count(m: int, n: int, length: int) -> int:
    if length == n:
        return 1
    return int(math.ceil((length - n) / m))


def _raw_starts(m: int, n: int, length: int) -> List[int]:
    q = _column_count(m, n, length)
    starts = [j * m for j in range(q - 1)]
    starts.append(length - n)
    return starts


@lru_cache(maxsize=64)
def _gather_index(params: EmbeddingParams) -> np.ndarray:
    starts = np.asarray(params.starts, dtype=np.intp)
    return starts[None, :] + np.arange(params.n, dtype=np.intp)[:, None]


@lru_cache(maxsize=64)
def _first_cover(params: EmbeddingParams) -> Tuple[np.ndarray, np.ndarray]:
    """Row and column of the lowest-index column covering each sample."""
    rows = np.empty(params.length, dtype=np.intp)
    cols = np.empty(params.length, dtype=np.intp)
    # later columns first so earlier ones overwrite the overlap
    for j in range(params.q - 1, -1, -1):
        s = params.starts[j]
        rows[s:s + params.n] = np.arange(params.n)
        cols[s:s + params.n] = j
    return rows, cols


def embed(signal: np.ndarray, params: EmbeddingParams) -> np.ndarray:
    """
    Arrange one channel into its n x q delay-embedding matrix.

    Args:
        signal: 1-D array of length params.length
        params: Validated embedding parameters

    Returns:
        n x q array with the dtype of ``signal``

    Raises:
        EmbeddingError: If the signal length does not match params.length
    """
    signal = np.asarray(signal)
    if signal.ndim != 1 or signal.shape[0] != params.length:
        raise EmbeddingError(f"Signal length {signal.shape} does not match L={params.length}",
                             details={"shape": list(signal.shape), "length": params.length})
    return signal[_gather_index(params)]


def invert(matrix: np.ndarray, params: EmbeddingParams, mode: str = "first") -> np.ndarray:
    """
    Read a signal back out of an n x q matrix.

    In ``first`` mode sample k is copied from the lowest-index column covering
    it, which makes inversion total for arbitrary matrices and bit-exact for
    true embeddings. ``mean`` averages every covering entry.

    Raises:
        EmbeddingError: On a dimension mismatch or unknown mode
    """
    matrix = np.asarray(matrix)
    if matrix.shape != (params.n, params.q):
        raise EmbeddingError(f"Matrix shape {matrix.shape} does not match ({params.n}, {params.q})",
                             details={"shape": list(matrix.shape), "expected": [params.n, params.q]})
    if mode == "first":
        rows, cols = _first_cover(params)
        return matrix[rows, cols]
    if mode == "mean":
        index = _gather_index(params)
        sums = np.zeros(params.length, dtype=np.float64)
        counts = np.zeros(params.length, dtype=np.float64)
        np.add.at(sums, index.ravel(), matrix.ravel().astype(np.float64))
        np.add.at(counts, index.ravel(), 1.0)
        return (sums / counts).astype(matrix.dtype, copy=False)
    raise EmbeddingError(f"Unknown inversion mode '{mode}'", details={"valid": list(INVERSION_MODES)})


def consistency_error(matrix: np.ndarray, params: EmbeddingParams) -> float:
    """Largest absolute disagreement between entries that refer to the same sample (0 for true embeddings)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (params.n, params.q):
        raise EmbeddingError(f"Matrix shape {matrix.shape} does not match ({params.n}, {params.q})",
                             details={"shape": list(matrix.shape), "expected": [params.n, params.q]})
    index = _gather_index(params).ravel()
    hi = np.full(params.length, -np.inf)
    lo = np.full(params.length, np.inf)
    np.maximum.at(hi, index, matrix.ravel())
    np.minimum.at(lo, index, matrix.ravel())
    return float(np.max(hi - lo))


@dataclass
class EmbeddedImage:
    """Multi-channel delay-embedded image with the metadata needed to invert it.

    ``pad`` is (top, bottom, left, right) zero padding around the n x q block.
    """
    pixels: np.ndarray
    pad: Tuple[int, int, int, int]
    params: EmbeddingParams
    channel_order: Tuple[str, ...] = CHANNEL_NAMES
    label: Optional[int] = None
    source: str = SOURCE_REAL
    normalized: bool = True
    recording_id: Optional[str] = None
    offset: Optional[int] = None
    seed: Optional[int] = None


def padding_for(params: EmbeddingParams, target_height: Optional[int], target_width: Optional[int],
                anchor: str = "bottom_right") -> Tuple[int, int, int, int]:
    """Zero-padding amounts that grow an n x q block to the target size."""
    if anchor not in PAD_ANCHORS:
        raise EmbeddingError(f"Unknown padding anchor '{anchor}'", details={"valid": list(PAD_ANCHORS)})
    height = params.n if target_height is None else int(target_height)
    width = params.q if target_width is None else int(target_width)
    if height < params.n or width < params.q:
        raise EmbeddingError(
            f"Target {height}x{width} is smaller than the embedding {params.n}x{params.q}",
            details={"target": [height, width], "embedding": [params.n, params.q]})
    extra_h, extra_w = height - params.n, width - params.q
    if anchor == "center":
        return extra_h // 2, extra_h - extra_h // 2, extra_w // 2, extra_w - extra_w // 2
    return 0, extra_h, 0, extra_w


def embed_window(window: SignalWindow, params: EmbeddingParams, target_height: Optional[int] = None,
                 target_width: Optional[int] = None, anchor: str = "bottom_right") -> EmbeddedImage:
    """Embed each channel of a window independently and stack them into one image."""
    top, bottom, left, right = padding_for(params, target_height, target_width, anchor)
    block = np.stack([embed(window.values[c], params) for c in range(window.values.shape[0])])
    pixels = np.pad(block, ((0, 0), (top, bottom), (left, right))) if (top or bottom or left or right) else block
    return EmbeddedImage(pixels=pixels, pad=(top, bottom, left, right), params=params,
                         channel_order=CHANNEL_NAMES, label=window.label, source=window.source,
                         normalized=window.normalized, recording_id=window.recording_id,
                         offset=window.offset, seed=window.seed)


def strip_padding(image: EmbeddedImage, padding_check: str = "error") -> np.ndarray:
    """Return the unpadded channels x n x q block after validating the padding metadata."""
    if padding_check not in PADDING_CHECKS:
        raise EmbeddingError(f"Unknown padding check '{padding_check}'", details={"valid": list(PADDING_CHECKS)})
    top, bottom, left, right = image.pad
    params = image.params
    expected = (len(image.channel_order), params.n + top + bottom, params.q + left + right)
    if min(image.pad) < 0 or tuple(image.pixels.shape) != expected:
        raise EmbeddingError(
            f"Pixel shape {image.pixels.shape} inconsistent with pad {image.pad} and embedding {params.n}x{params.q}",
            details={"shape": list(image.pixels.shape), "expected": list(expected), "pad": list(image.pad)})
    h, w = image.pixels.shape[1:]
    block = image.pixels[:, top:h - bottom, left:w - right]
    if padding_check != "ignore" and (top or bottom or left or right):
        mask = np.ones(image.pixels.shape[1:], dtype=bool)
        mask[top:h - bottom, left:w - right] = False
        offending = int(np.count_nonzero(image.pixels[:, mask]))
        if offending:
            message = f"Padding region holds {offending} non-zero values"
            if padding_check == "error":
                raise EmbeddingError(message, details={"nonzero": offending, "pad": list(image.pad)})
            logger.warning(message)
    return block


def invert_image(image: EmbeddedImage, padding_check: str = "error", mode: str = "first") -> SignalWindow:
    """Strip padding and invert every channel back to a 3 x L window."""
    block = strip_padding(image, padding_check)
    values = np.stack([invert(block[c], image.params, mode) for c in range(block.shape[0])])
    return SignalWindow(values=values, label=-1 if image.label is None else image.label,
                        source=image.source, normalized=image.normalized,
                        recording_id=image.recording_id, offset=image.offset, seed=image.seed)


class EmbeddingCodec:
    """Batch conversion between windows and fixed-size image arrays for one configuration."""

    def __init__(self, params: EmbeddingParams, target_height: Optional[int] = None,
                 target_width: Optional[int] = None, anchor: str = "bottom_right",
                 inversion: str = "first"):
        self.params = params
        self.pad = padding_for(params, target_height, target_width, anchor)
        self.anchor = anchor
        self.inversion = inversion
        self.image_shape = (len(CHANNEL_NAMES), params.n + self.pad[0] + self.pad[1],
                            params.q + self.pad[2] + self.pad[3])

    def encode(self, windows: Sequence[SignalWindow]) -> np.ndarray:
        """Stack embedded windows into an (N, 3, H, W) array."""
        if not windows:
            return np.zeros((0,) + self.image_shape, dtype=np.float32)
        return np.stack([self.to_image(w).pixels for w in windows])

    def to_image(self, window: SignalWindow) -> EmbeddedImage:
        return embed_window(window, self.params, self.image_shape[1], self.image_shape[2], self.anchor)

    def from_pixels(self, pixels: np.ndarray, **meta) -> EmbeddedImage:
        return EmbeddedImage(pixels=pixels, pad=self.pad, params=self.params, **meta)

    def decode(self, pixels: np.ndarray, padding_check: str = "ignore", **meta) -> SignalWindow:
        """Invert one (3, H, W) array; generated images carry arbitrary padding values, hence ``ignore``."""
        return invert_image(self.from_pixels(pixels, **meta), padding_check, self.inversion)
