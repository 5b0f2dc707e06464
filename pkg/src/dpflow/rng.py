"""Seed-splitting helpers.

Every random quantity in the package is drawn from a ``numpy.random.Generator``
built from a 64-bit user seed plus a small tuple of stream ids, so that runs
are reproducible from a single integer and independent components (data,
features, noise, test points) never share a stream.
"""

from __future__ import annotations

import numpy as np

# stream ids, one per independent source of randomness
DATA = 0
FEATURES = 1
NOISE = 2
TEST = 3
PATH = 4


def rng_from(seed: int, *stream: int) -> np.random.Generator:
    """Return a generator for (seed, stream-id...).

    Distinct ``stream`` tuples under the same seed yield statistically
    independent generators (SeedSequence spawn keys).
    """
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=stream)
    )
