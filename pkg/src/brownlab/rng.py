"""Counter-based random streams.

All randomness in the package flows through Philox counter-based
generators keyed by a user seed plus an explicit stream path. Distinct
paths give statistically independent streams, and the draw sequence of a
stream never depends on scheduling, so results are reproducible for a
fixed seed regardless of how many workers run.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for stream `path` under `seed`.

    Up to three path components are folded into the 256-bit Philox
    counter; the key holds the seed.
    """
    if len(path) > 3:
        raise ValueError("stream path supports at most three components")
    counter = [0, 0, 0, 0]
    for i, p in enumerate(path):
        counter[i + 1] = int(p) & _MASK64
    bitgen = np.random.Philox(key=int(seed) & _MASK64, counter=counter)
    return np.random.Generator(bitgen)
