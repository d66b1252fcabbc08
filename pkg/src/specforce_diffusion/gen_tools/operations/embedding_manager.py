"""
Embedding Manager: bit-exactness audit of the signal <-> image transform.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..embedding.delay_embedding import EmbeddingParams, embed, invert
from ..utils.seeding import derive_rng
from .data_manager import DataManager
from .run_manifest import RunManifest

AUDIT_STREAM = "roundtrip-audit"


@dataclass
class RoundtripAudit:
    """Outcome of an embed/invert audit; ``first_mismatch`` is (item, channel, index...) or None."""
    checked: int
    passed: bool
    first_mismatch: Optional[Tuple[int, ...]] = None
    stage: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"result": "PASS" if self.passed else "FAIL", "checked": self.checked,
                "first_mismatch": list(self.first_mismatch) if self.first_mismatch else None, "stage": self.stage}


def _first_difference(a: np.ndarray, b: np.ndarray) -> Optional[Tuple[int, ...]]:
    """Index of the first element whose bit pattern differs."""
    if a.dtype != b.dtype or a.shape != b.shape:
        return (0,)
    bits = np.dtype(f"u{a.dtype.itemsize}")
    diff = np.argwhere(np.ascontiguousarray(a).view(bits) != np.ascontiguousarray(b).view(bits))
    return tuple(int(i) for i in diff[0]) if diff.size else None


def audit_signals(signals: np.ndarray, params: EmbeddingParams, corrupt: bool = False) -> RoundtripAudit:
    """
    Check ``invert(embed(x)) == x`` bit for bit, and that the image re-embeds exactly.

    Args:
        signals: (N, C, L) raw values
        params: Embedding parameters
        corrupt: Perturb one pixel of the first image (self-test of the audit)
    """
    for item in range(signals.shape[0]):
        for channel in range(signals.shape[1]):
            x = signals[item, channel]
            image = embed(x, params)
            if corrupt and item == 0 and channel == 0:
                image = image.copy()
                image.flat[image.size - 1] = np.nextafter(image.flat[image.size - 1], np.inf)
            restored = invert(image, params)
            mismatch = _first_difference(restored, x)
            if mismatch is not None:
                return RoundtripAudit(checked=item + 1, passed=False, first_mismatch=(item, channel) + mismatch,
                                      stage="invert")
            mismatch = _first_difference(embed(restored, params), image)
            if mismatch is not None:
                return RoundtripAudit(checked=item + 1, passed=False, first_mismatch=(item, channel) + mismatch,
                                      stage="image")
    return RoundtripAudit(checked=int(signals.shape[0]), passed=True)


class EmbeddingManager:
    """Runs round-trip audits over a dataset or over random signals."""

    def __init__(self, config, manifest: RunManifest, data_manager: DataManager):
        self.config = config
        self.manifest = manifest
        self.data_manager = data_manager
        self.logger = logging.getLogger(__name__)
        self.run_id = manifest.run_id

    def roundtrip_check(self, dataset_path: Optional[Union[str, Path]] = None, length: Optional[int] = None,
                        m: Optional[int] = None, n: Optional[int] = None, count: int = 1000,
                        corrupt: bool = False) -> RoundtripAudit:
        settings = self.config.embedding
        if dataset_path:
            bundle = self.data_manager.load(dataset_path)
            windows = [w for split in bundle.splits.values() for w in split]
            signals = np.stack([w.values for w in windows])
            params = EmbeddingParams(m=m or settings.m, n=n or settings.n, length=signals.shape[2])
        else:
            params = EmbeddingParams(m=m or settings.m, n=n or settings.n, length=length or settings.length)
            rng = derive_rng(self.config.seed, AUDIT_STREAM)
            signals = rng.standard_normal((count, 3, params.length)).astype(np.float32)
        self.logger.info(f"[Run ID: {self.run_id}] Auditing {signals.shape[0]} signals with m={params.m}, "
                         f"n={params.n}, L={params.length} ({params.n}x{params.q} images)")
        audit = audit_signals(signals, params, corrupt)
        if audit.passed:
            self.logger.info(f"[Run ID: {self.run_id}] Round-trip PASS over {audit.checked} signals")
        else:
            self.logger.warning(f"[Run ID: {self.run_id}] Round-trip FAIL at {audit.first_mismatch} "
                                f"({audit.stage} stage)")
        return audit
