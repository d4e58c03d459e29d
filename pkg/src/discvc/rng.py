"""Counter-based random streams.

All stochastic code takes an explicit ``numpy.random.Generator``. Streams are
derived from a (seed, *tags) key via Philox, so any point of a run can be
reconstructed without replaying the draws that preceded it (checkpoint resume
relies on this).
"""

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for the key (seed, *stream).

    The same key always yields the same draw sequence; distinct keys yield
    statistically independent streams.
    """
    if seed < 0 or any(s < 0 for s in stream):
        raise ValueError("rng keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, *stream))))
