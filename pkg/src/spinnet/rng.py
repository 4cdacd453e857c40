"""Seed plumbing: named substreams of a counter-based generator.

All randomness in the package flows from a single 64-bit experiment seed.
Substreams are derived with ``SeedSequence(entropy=seed, spawn_key=path)``
feeding a Philox counter-based bit generator, so any (seed, path) pair is
reproducible independently of draw order elsewhere.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream path codes used across the package.
ARRIVALS = 1
SERVICE = 2
SIZES = 3
COUPLING = 4
INITIAL = 5


def _normalize(part) -> int:
    if isinstance(part, str):
        # Stable, platform-independent mapping of short labels to ints.
        return int.from_bytes(part.encode("utf-8")[:8].ljust(8, b"\0"), "little")
    return int(part) & _MASK64


def bit_generator(seed: int, *path) -> np.random.Philox:
    """Philox bit generator for the substream addressed by ``path``."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=tuple(_normalize(p) for p in path),
    )
    return np.random.Philox(ss)


def generator(seed: int, *path) -> np.random.Generator:
    """Generator wrapper over :func:`bit_generator` for Python-side draws."""
    return np.random.Generator(bit_generator(seed, *path))
