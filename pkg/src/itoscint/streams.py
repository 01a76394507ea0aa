"""Counter-addressed random streams.

A stream is identified by ``(master_seed, *address)``; the same address
always yields the same Philox generator, independent of how many other
streams were created before it or on which worker it is drawn.
"""
from __future__ import annotations

import numpy as np

SOURCE = 0
MEDIUM = 1


def stream(master_seed: int, *address: int) -> np.random.Generator:
    """Philox generator keyed by ``master_seed`` and an integer address."""
    if master_seed < 0 or master_seed >= 2 ** 64:
        raise ValueError("master_seed must be an unsigned 64-bit integer")
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, int(master_seed) >> 32,
                                  *[int(a) for a in address]])
    return np.random.Generator(np.random.Philox(seq))


def realization_streams(master_seed: int, index: int) -> tuple:
    """(source stream, medium stream) for realization ``index``."""
    return stream(master_seed, index, SOURCE), stream(master_seed, index, MEDIUM)
