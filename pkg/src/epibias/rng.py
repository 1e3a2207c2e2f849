"""Reproducible random-number streams.

Every stochastic component draws from a generator keyed by
``(master_seed, stream_id)``.  Streams with different ids are statistically
independent and can be created in any order, so ensemble replicates may run
in parallel and still produce bit-identical results.
"""

from __future__ import annotations

import numpy as np


def stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Return the generator for one (master seed, stream id) pair.

    The same pair always yields the same draw sequence, independent of how
    many other streams exist or in which order they were created.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(stream_id)]))
