# utils/seeding.py
"""
Per-run random streams.

Every run draws from its own Philox stream keyed by (master seed, run key), so
the draws of one run never depend on which other runs executed or in which
order a worker pool scheduled them.
"""
import zlib
from typing import Union

import numpy as np

RunKey = Union[int, str]


def run_key(label: RunKey) -> int:
    """Stable 32-bit key; strings go through CRC32 so the key survives restarts."""
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    if label < 0:
        raise ValueError(f"run key must be nonnegative, got {label}")
    return int(label)


def run_generator(seed: int, *keys: RunKey) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(run_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))
