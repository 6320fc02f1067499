"""Deterministic random streams.

All randomness in the package flows through `stream`, which builds a
counter-based Philox generator keyed by a user seed plus an integer path
(replicate index, bootstrap index, ...). Streams with distinct paths are
independent, so work can be scheduled serially or in parallel and still
produce bit-identical results.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for `(seed, path)`; same arguments always give the same stream."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
