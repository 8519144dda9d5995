"""Seeded random streams.

Every simulator draws from Philox (a counter-based bit generator) keyed by a
``SeedSequence``.  Independent Brownian drivers get distinct spawned children,
so adding a stream never perturbs the draws of another one.
"""

from __future__ import annotations

import numpy as np


def streams(seed: int | None, n: int) -> list[np.random.Generator]:
    """Return ``n`` independent generators derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def stream(seed: int | None) -> np.random.Generator:
    return streams(seed, 1)[0]
