"""Deterministic, hierarchical random streams.

All randomness in the package flows through `stream(...)`: a seed plus an
arbitrary path of integer keys maps to an independent generator.  Streams are
counter-style (key-derived, not split-order-derived), so parallel workers can
build their own streams from (trial, role) coordinates and the aggregate
result does not depend on scheduling order.
"""

from __future__ import annotations

import numpy as np

# Role keys, so call sites read as stream(seed, trial, ROLE_DATA) etc.
ROLE_DATA = 1
ROLE_AUGMENT = 2
ROLE_LABELS = 3
ROLE_SIGNAL = 4
ROLE_SURROGATE = 5
ROLE_TEST = 6
ROLE_SCALES = 7
ROLE_MISC = 8


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for an integer seed and a path of integer keys."""
    keys = [int(seed)] + [int(k) for k in path]
    if any(k < 0 for k in keys):
        # SeedSequence entropy must be nonnegative; shift into a disjoint range.
        keys = [2 * k if k >= 0 else -2 * k - 1 for k in keys]
    return np.random.default_rng(np.random.SeedSequence(keys))
