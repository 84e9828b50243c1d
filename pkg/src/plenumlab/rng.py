"""Deterministic randomness: one u64 run seed, counter-based streams.

Every stochastic component derives its own Philox stream from the run seed
plus a tag path, so adding or reordering consumers never perturbs the
streams of unrelated components.
"""

import hashlib
import struct

import numpy as np


def derive_key(seed: int, *tags) -> int:
    """128-bit Philox key from the run seed and a tag path."""
    h = hashlib.sha256()
    h.update(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "little")


def generator(seed: int, *tags) -> np.random.Generator:
    """Independent counter-based generator for (seed, *tags)."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *tags)))
