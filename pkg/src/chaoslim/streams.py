"""Deterministic per-replication random streams.

One master 64-bit seed; each (context, replication) pair gets an independent
Philox stream keyed on (seed, context << 32 | replication).  Streams are a
pure function of the key, so results never depend on worker count or on the
order replications are executed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(seed: int, rep: int, context: int = 0) -> np.random.Generator:
    """Counter-based generator for replication `rep` within `context`."""
    if rep < 0 or context < 0:
        raise ValueError("rep and context must be nonnegative")
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(((context & 0xFFFFFFFF) << 32) | (rep & 0xFFFFFFFF))],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
