"""Checkpoint schedules for streaming orbit scans."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["geometric_checkpoints"]


def geometric_checkpoints(n_max: int, ratio: float = 1.3) -> np.ndarray:
    """Strictly increasing checkpoints ceil(ratio^k) clipped to n_max.

    The final entry is always n_max.  A geometric schedule matches the
    multiplicative time scales on which empirical-measure oscillation
    operates; linear checkpointing would oversample late times and miss the
    early structure.
    """
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1")
    out = []
    k = 0
    while True:
        v = math.ceil(ratio ** k)
        if v >= n_max:
            break
        if not out or v > out[-1]:
            out.append(v)
        k += 1
    out.append(n_max)
    return np.array(out, dtype=np.int64)
