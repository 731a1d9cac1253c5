"""Reproducible counter-based random streams.

Every stochastic component draws from a Philox generator keyed by a
``(seed, key...)`` tuple, so any draw can be reproduced from the run seed
plus a small set of integers (and is independent of thread scheduling).
Distinct keys yield statistically independent streams; identical keys
reproduce the identical sequence bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# SeedSequence splits large spawn-key entries into 32-bit words without a
# delimiter, so e.g. (2**32,) and (0, 1) collide. Every key component must
# therefore stay below 2**32.
_KEY_WORD = 2**32

# Leading key component namespacing the consumers of a seed, so that e.g. a
# data generator and a filter given the same seed never share a stream.
PURPOSE_INIT = 0
PURPOSE_RESAMPLE = 1
PURPOSE_PROPAGATE = 2
PURPOSE_SYNTH = 3


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the Philox generator for a (seed, key...) stream.

    Each ``key`` component must be a non-negative integer below 2**32.
    """
    for part in key:
        if not 0 <= part < _KEY_WORD:
            raise ValueError(f"stream key component {part} outside [0, 2**32)")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream_id) pair naming one independent random stream.

    ``stream_id`` is a 64-bit unsigned integer; it is split into two 32-bit
    words before keying so arbitrary 64-bit ids are safe.
    """

    seed: int
    stream_id: int

    def __post_init__(self):
        if not 0 <= self.stream_id < 2**64:
            raise ValueError("stream_id must fit in 64 bits")

    def generator(self) -> np.random.Generator:
        return substream(self.seed, self.stream_id % _KEY_WORD, self.stream_id // _KEY_WORD)
