"""Counter-based random streams keyed by ``(seed, *key)``.

Every stream is a Philox generator whose key is derived from a
``SeedSequence`` with the extra integers as spawn key, so replication ``r``
of study ``s`` draws the same numbers whether it runs first, last, or in a
different process.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int], np.random.Generator]

# purpose tags mixed into the stream key
SIMULATE = 0
COVARIATES = 1
ERRORS = 2
PROBE = 3
PERTURB = 4


def stream(seed: SeedLike, *key: int) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *key)``.

    ``seed`` may itself be a tuple ``(seed, k1, k2, ...)``; the keys are
    concatenated. A ``Generator`` is passed through untouched.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        base, *prefix = [int(s) for s in seed]
    else:
        base, prefix = int(seed), []
    if base < 0:
        raise ValueError(f"seed must be non-negative, got {base}")
    spawn_key = tuple(prefix) + tuple(int(k) for k in key)
    ss = np.random.SeedSequence(entropy=base, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


def seed_repr(seed: SeedLike) -> int | tuple[int, ...] | None:
    if isinstance(seed, np.random.Generator):
        return None
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return int(seed)
