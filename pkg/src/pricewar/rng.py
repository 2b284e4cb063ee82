"""Deterministic random-stream derivation.

Every stream in the library is derived from an integer seed plus a fixed
integer path, never from global state, so that serial, multi-threaded, and
re-run executions all see identical draws.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def derive(seed: int, *path: int) -> np.random.Generator:
    """Child generator for a (seed, path...) address."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & _MASK64, *map(int, path)]))


def customer_stream(seed: int, customer: int, round_idx: int) -> np.random.Generator:
    """Counter-based stream for one customer in one round.

    Philox keys make the stream a pure function of (seed, customer, round),
    so a parallel map over customers reproduces the serial draws exactly.
    """
    key = np.array([int(seed) & _MASK64,
                    ((int(round_idx) << 32) | (int(customer) & 0xFFFFFFFF)) & _MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
