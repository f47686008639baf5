"""Deterministic counter-based random streams.

Every stochastic component draws from a Philox generator keyed by
(seed, stream). Streams are independent and reproducible regardless of
execution order, which is what makes parallel experiment runs and
byte-identical reruns possible.
"""

import numpy as np

_MASK = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & _MASK, int(stream) & _MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
