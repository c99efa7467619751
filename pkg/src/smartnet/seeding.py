"""Deterministic seed splitting.

Every random stream descends from one user seed: the stream for task key
``(k1, k2, ...)`` is ``SeedSequence(seed, spawn_key=(k1, k2, ...))``. Results
therefore do not depend on execution order or worker count.
"""

import numpy as np


def derive(seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def derive_int(seed: int, *keys: int) -> int:
    """A 63-bit integer seed for the sub-stream (handy for reports and files)."""
    return int(derive(seed, *keys).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
