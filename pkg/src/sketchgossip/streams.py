"""Seeded random streams.

Every run owns a generator derived from ``(master seed, trial, stream)``
through :class:`numpy.random.SeedSequence` spawn keys, so trials are
independent and their results do not depend on execution order.
"""

import numpy as np


def trial_rng(seed, trial=0, stream=0):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def as_rng(rng_or_seed):
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return np.random.default_rng(rng_or_seed)
