"""
Named random streams derived from a single global seed.

A stream key is the first 8 bytes of sha256("<seed>/<name>") read as an unsigned
little-endian integer; it seeds a numpy SeedSequence together with the global
seed. The same (seed, name) pair always yields the same generator, independent
of which other streams were drawn before it.
"""

import hashlib
from typing import Sequence

import numpy as np

DATA_SHUFFLE = "data-shuffle"
INIT = "init"
NOISE = "noise"
SAMPLER = "sampler"
SPLIT = "split"
TSNE = "tsne"
DROPOUT = "dropout"


def stream_key(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, name: str, *extra: int) -> np.random.Generator:
    """
    Build the generator for a named sub-stream.

    Args:
        seed: Global run seed
        name: Stream name (see module constants)
        *extra: Further integers, e.g. an item index for per-item sampler streams

    Returns:
        A numpy Generator (PCG64) seeded deterministically
    """
    entropy: Sequence[int] = [int(seed) & 0xFFFFFFFF, stream_key(seed, name), *[int(e) for e in extra]]
    return np.random.default_rng(np.random.SeedSequence(entropy))
