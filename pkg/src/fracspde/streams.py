"""Counter-based random streams for reproducible, parallel Monte Carlo.

Each path owns a Philox stream keyed by the run seed with the path index in
the high word of the counter, so streams never overlap and do not depend on
how paths are split across workers.  A path draws its whole ``(steps, width)``
block of standard normals in one call; row ``j`` holds the normals of time
step ``j`` and depends only on ``(seed, path, j, width)``.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["SEED_ENV", "philox_key", "path_generator", "path_normals", "resolve_seed"]

SEED_ENV = "FRACSPDE_SEED"

_MASK64 = (1 << 64) - 1


def resolve_seed(seed: int) -> int:
    """Apply the ``FRACSPDE_SEED`` environment override, if set."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env.strip(), 0)
    return int(seed)


def philox_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed) & _MASK64).generate_state(2, np.uint64)


def path_generator(seed: int, path: int, key: np.ndarray | None = None) -> np.random.Generator:
    if key is None:
        key = philox_key(seed)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(path)]))


def path_normals(seed: int, paths, steps: int, width: int) -> np.ndarray:
    """Standard normals of shape ``(len(paths), steps, width)``."""
    key = philox_key(seed)
    paths = list(paths)
    out = np.empty((len(paths), steps, width))
    for row, p in enumerate(paths):
        out[row] = path_generator(seed, p, key).standard_normal((steps, width))
    return out
