"""Deterministic named RNG substreams.

Every random decision in the library draws from a generator obtained here, so
a run is a pure function of (seed, stream names). Names are hashed with crc32
into the SeedSequence entropy, which keeps streams independent and stable
across processes.
"""

from __future__ import annotations

from zlib import crc32

import numpy as np


def substream(seed: int, *names) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFF]
    for name in names:
        entropy.append(crc32(str(name).encode("utf-8")))
    return np.random.default_rng(entropy)
