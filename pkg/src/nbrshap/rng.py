"""Seed plumbing.

Every random stream is a Philox (counter-based) generator keyed by the
user's 64-bit seed and a spawn path of small integers, so streams are
independent of each other and of how work is scheduled across threads.
"""

from __future__ import annotations

import numpy as np

# spawn-path roots, one per consumer
COALITIONS = 1
REFERENCES = 2
FIELD = 3
MANIFOLD = 4
FIDELITY = 5
LIPSCHITZ = 6
DATA = 7


def generator(seed: int, *path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
