"""Named, splittable RNG streams.

Every stochastic routine in the package takes an explicit numpy Generator.
`stream(seed, *path)` derives independent child generators from a root seed
and an integer path, so parallel work keyed by (seed, index) is reproducible
regardless of scheduling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the sub-stream identified by (seed, *path)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(p) for p in path]]))
