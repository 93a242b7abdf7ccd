"""Reproducible random streams.

Every random draw in the package goes through :func:`make_rng`, which keys a
Philox counter-based generator with ``seed`` in the low 64 bits and ``stream``
in the high 64 bits. Two implementations that agree on this keying produce
identical streams for identical ``(seed, stream)`` pairs.
"""

from __future__ import annotations

import numpy as np

_U64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    seed = int(seed)
    stream = int(stream)
    if seed < 0 or seed > _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if stream < 0 or stream > _U64:
        raise ValueError(f"stream must be an unsigned 64-bit integer, got {stream}")
    return np.random.Generator(np.random.Philox(key=seed | (stream << 64)))
