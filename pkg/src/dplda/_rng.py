"""Deterministic, independently seeded random streams.

Every stochastic step (minibatch sampling, per-document truncation, noise
draws, parameter init) pulls its own generator keyed by (master seed, label,
indices), so results do not depend on call order or parallel scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Return a fresh PCG64 generator for the given (seed, label, indices) key.

    Streams with different keys are statistically independent; the same key
    always yields the same bit stream.
    """
    key = zlib.crc32(label.encode("ascii"))
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=(key, *(int(i) for i in indices)),
    )
    return np.random.default_rng(ss)
