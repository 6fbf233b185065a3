# fedtoe/core/random_streams.py
"""
Seeded random substreams.

Every consumer of randomness (sampling, local SGD, quantization, channel
draws) asks for a generator keyed by the entity it serves, e.g.
``substream(seed, round_index, slot)``. Two calls with the same key return
identical streams regardless of how many other streams were used before.
"""

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under the root ``seed``"""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(sequence))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
