"""
Reproducible random streams.

Every stream is a counter-based Philox generator keyed by a root seed and a
tuple of integer keys, so (seed, replication, bootstrap sample, attempt) always
maps to the same draws regardless of scheduling.
"""
from typing import Tuple

import numpy as np


def _key(keys: Tuple[int, ...]) -> Tuple[int, ...]:
    return tuple(int(k) for k in keys)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Child generator for ``(seed, *keys)``."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=_key(keys))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit seed for a nested stream family (e.g. the bootstrap of replication r)."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=_key(keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
