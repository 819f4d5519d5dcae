"""Counter-based random streams.

Every random draw is a pure function of a key tuple ``(seed, step, phase,
index)``, hashed with the SplitMix64 finalizer. Nothing carries hidden state,
so a draw does not depend on iteration order, window placement, or how many
other draws happened first. The scalar and vectorized paths produce the same
bits; tests cross-check them.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / float(1 << 53)


def splitmix64(z: int) -> int:
    z = (z + _GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix(*words: int) -> int:
    """Fold integers into one 64-bit key."""
    h = 0
    for w in words:
        h = splitmix64(h ^ (int(w) & MASK64))
    return h


def uniform_scalar(seed: int, step: int, phase: int, index: int) -> float:
    """One draw in [0, 1) for a single key, in plain Python integers."""
    return (splitmix64(mix(seed, step, phase) ^ (int(index) & MASK64)) >> 11) * _INV_2_53


def _splitmix64_array(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniform_array(seed: int, step: int, phase: int, index: np.ndarray) -> np.ndarray:
    """Vectorized :func:`uniform_scalar` over an array of indices."""
    base = np.uint64(mix(seed, step, phase))
    h = _splitmix64_array(np.asarray(index, dtype=np.uint64) ^ base)
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53


def linear_index(coords, dims) -> np.ndarray | int:
    """x-fastest linear voxel index, ``x + nx*(y + ny*z)``."""
    x, y, z = coords
    nx, ny, _ = dims
    return x + nx * (y + ny * z)


def stable_hash(text: str) -> int:
    """64-bit hash of a string that is identical across processes and platforms."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def derive_seed(seed: int, *tags) -> int:
    """Sub-seed for an independent stream; string tags are hashed stably."""
    words = [seed] + [stable_hash(t) if isinstance(t, str) else int(t) for t in tags]
    return mix(*words)


def generator(seed: int, *tags) -> np.random.Generator:
    """Sequential stream on the Philox counter-based bit generator."""
    key = derive_seed(seed, *tags)
    return np.random.Generator(np.random.Philox(key=key))
