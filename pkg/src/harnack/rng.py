"""Seeded randomness for Monte Carlo cross-checks.

All stochastic code in this package draws from numpy's Philox bit generator
(Philox4x64-10), a named counter-based generator: a ``(seed, stream)`` pair
fully determines the output stream, independent of platform threading.  Seeds
are recorded in every report that used randomness.
"""

from __future__ import annotations

import numpy as np


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a Generator over Philox keyed by ``(seed, stream)``."""
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be nonnegative integers")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
