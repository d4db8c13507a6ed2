"""Counter-based random streams.

Each reproducible draw gets its own Philox stream addressed by
``key = (seed, purpose << 32 | sub)`` and a starting counter
``(0, a, b, c)``. Draws only advance counter word 0, so streams with
different ``(a, b, c)`` never overlap, and the same address always yields
the same numbers regardless of execution order or thread count.
"""

from __future__ import annotations

import zlib

import numpy as np

# purpose tags; kept stable so recorded seeds stay meaningful
INIT_NOISE = 1
RENOISE = 2
TRUNCATION = 3
MASK_SAMPLING = 4
DATASET_ITEM = 5
TRAINING = 6
PHANTOM = 7
DROPOUT = 8

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


def tag(name: str) -> int:
    """Stable 32-bit integer for a string label such as a view name."""
    return zlib.crc32(name.encode()) & _MASK32


def stream(seed: int, purpose: int, a: int = 0, b: int = 0, c: int = 0, sub: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & _MASK64, ((int(purpose) & _MASK32) << 32) | (int(sub) & _MASK32)], dtype=np.uint64)
    counter = np.array([0, int(a) & _MASK64, int(b) & _MASK64, int(c) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normal(shape, seed: int, purpose: int, a: int = 0, b: int = 0, c: int = 0, sub: int = 0) -> np.ndarray:
    return stream(seed, purpose, a, b, c, sub).standard_normal(shape)


def normal_batch(item_shape, items, seed: int, purpose: int, b: int = 0, c: int = 0, sub: int = 0) -> np.ndarray:
    """Stack of per-item draws; item ``i`` of ``items`` uses counter word ``a = i``."""
    return np.stack([normal(item_shape, seed, purpose, i, b, c, sub) for i in items])
