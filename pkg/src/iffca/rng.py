"""Counter-based random numbers.

Every draw is a pure function of ``(key, stream, step, index, draw)``, so a
pedestrian's decisions depend only on its id and the step number, never on
the order in which pedestrians (or cells, or runs) are processed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0

# stream tags
DECIDE = 1
CONFLICT = 2
FIELD = 3
FIELD_DECAY = 4


@njit(cache=True)
def mix64(z):
    """SplitMix64 finalizer (a bijection on 64-bit words)."""
    z = np.uint64(z)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _absorb(h, x):
    return mix64(h + (np.uint64(x) + np.uint64(1)) * _GAMMA)


@njit(cache=True)
def hash64(key, stream, step, index, draw):
    h = _absorb(np.uint64(key), stream)
    h = _absorb(h, step)
    h = _absorb(h, index)
    return _absorb(h, draw)


@njit(cache=True)
def uniform(key, stream, step, index, draw):
    """Uniform double in [0, 1) for the given counter tuple."""
    return float(hash64(key, stream, step, index, draw) >> np.uint64(11)) * _INV53


def derive_key(seed: int) -> np.uint64:
    """Map a user seed (any non-negative int) to a 64-bit stream key."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.uint64(mix64(np.uint64(seed % (1 << 64)) ^ np.uint64(0x1FFCA)))
