"""Reproducible random streams.

Every stream is a counter-based Philox4x64 generator keyed by a
``SeedSequence`` built from a 64-bit seed and a stream path (for example
``(trial, purpose)``), so independent trials never share state and any
stream can be regenerated in isolation.
"""
from __future__ import annotations

import numpy as np

GENERATOR_NAME = "Philox4x64-10/SeedSequence"

SOLVE = 0
EVALUATE = 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(seq))
