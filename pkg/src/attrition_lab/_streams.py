"""Counter-based random streams keyed by (base seed, stream ids)."""

from __future__ import annotations

import numpy as np


def stream(seed) -> np.random.Generator:
    """Return a Philox generator for ``seed``.

    ``seed`` is an int or a tuple ``(base, id, id, ...)``. Streams with
    different id tuples are statistically independent, so episode ``i`` of
    a batch can be drawn on any worker and still reproduce bit-for-bit.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        base, *keys = seed
    else:
        base, keys = seed, []
    ss = np.random.SeedSequence(entropy=int(base), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
