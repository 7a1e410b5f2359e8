"""Deterministic counter-addressed random streams.

Every Monte-Carlo consumer draws from a Philox generator keyed by
``(seed, *path)`` where ``path`` is a tuple of small integers addressing the
work unit (resource-block index, block index, packet index, ...).  Work
split across any number of threads therefore reproduces the single-threaded
output bit for bit: each block's variates depend only on its address.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream_for", "BLOCK_SIZE", "iter_blocks"]

# Samples per scheduling block.  Fixed constant: changing it changes which
# variates land in which sample and therefore the (deterministic) output.
BLOCK_SIZE = 1 << 15


def stream_for(seed: int, *path: int) -> np.random.Generator:
    """Generator for the work unit addressed by (seed, *path)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def iter_blocks(n_total: int, block_size: int = BLOCK_SIZE):
    """Yield (block_index, start, count) covering range(n_total)."""
    idx = 0
    start = 0
    while start < n_total:
        count = min(block_size, n_total - start)
        yield idx, start, count
        idx += 1
        start += count
