"""Deterministic random-stream derivation.

Every unit of work (chain iteration, replicate simulation, particle move)
draws from its own substream derived from a path of integer indices under the
run seed. Results are therefore identical regardless of scheduling or worker
count.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the unit of work identified by ``(seed, *path)``."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(p) for p in path)))
