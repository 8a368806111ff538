"""Counter-based random streams.

Every stream is a Philox generator whose key is derived from a master seed
and an integer path (for instance ``(ROLLOUT, block)`` or
``(PLANNER, state, action)``).  Because a stream depends only on its path,
results never depend on the order in which independent pieces of work are
evaluated.
"""

from __future__ import annotations

import numpy as np

# Stream domains, used as the first path component.
ASSESSORS = 1
REWARD = 2
PLANNER = 3
ROLLOUT = 4
POLICY = 5
SAFEGUARD = 6
ACTION = 7
SCENARIO = 8
VERIFY = 9


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for ``path`` under master ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = tuple(int(p) for p in path)
    if any(p < 0 for p in key):
        raise ValueError(f"stream path components must be non-negative, got {key}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng()
    return stream(int(rng))


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit master seed for the sub-computation at ``path``."""
    words = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path)).generate_state(2, np.uint32)
    return (int(words[0]) << 31) ^ int(words[1])
