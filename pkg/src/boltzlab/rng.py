"""Counter-based random number streams.

Every source of pseudo-randomness in the package is a Philox generator whose
key is derived from (master seed, a tuple of string/int tags).  Streams are
independent of execution order and thread count, so parallel work merged in a
fixed order reproduces bit-for-bit.
"""

import hashlib

import numpy as np

__all__ = ["stream", "stream_key", "spawn_int"]


def stream_key(seed, *tags):
    """128-bit Philox key derived from a master seed and hashable tags."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for t in tags:
        h.update(b"\x1f")
        h.update(str(t).encode())
    return int.from_bytes(h.digest()[:16], "little")


def stream(seed, *tags) -> np.random.Generator:
    """Independent generator for (seed, tags); same inputs, same stream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *tags)))


def spawn_int(seed, *tags) -> int:
    # 63-bit seed for consumers that need a plain integer (e.g. numba kernels)
    return stream_key(seed, *tags) & ((1 << 63) - 1)
