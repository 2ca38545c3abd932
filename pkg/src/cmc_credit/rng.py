"""Seedable, splittable random streams.

All randomness in the package comes from numpy's ``PCG64`` bit generator
seeded through ``SeedSequence``.  A stream is identified by a root seed and
a tuple of integer keys; the keys become the ``spawn_key`` of the seed
sequence, so ``substream(seed, s)`` is independent of ``substream(seed, t)``
for ``s != t`` and is reproducible on every platform numpy supports.

Uniform doubles are produced by ``Generator.random`` (53-bit mantissa
construction), which is also platform independent.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return substream(int(rng))
