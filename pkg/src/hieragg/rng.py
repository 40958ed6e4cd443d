"""Counter-based random streams keyed by (master seed, purpose, coordinates).

Every random vector in the package is drawn from its own Philox stream whose
key is derived from the master seed and a tuple of integers naming what the
stream is for (a leaf, a copula column at a given node, a block of joint
draws, ...). Streams never depend on the order in which they are requested,
which is what makes serial and threaded runs agree bit for bit.
"""

from __future__ import annotations

import numpy as np

# first element of every stream key
LEAF = 0
COPULA = 1
JOINT = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
