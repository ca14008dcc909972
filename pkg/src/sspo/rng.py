"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, *key)`` through :class:`numpy.random.SeedSequence`.  A
stream is therefore a pure function of its key: the order in which streams are
created or consumed never changes what any single stream produces, so work can
be split across processes without changing results.

Key layout used by the trainer::

    (salt, update_index, ROLLOUT, prompt_slot)   prompt + G responses
    (salt, update_index, SHUFFLE, epoch)         mini-batch permutation

``salt`` is 0 for plain training runs and ``1 + objective index`` for
comparison cells, so each (objective, seed) cell owns independent streams.
"""

import numpy as np

ROLLOUT = 0
SHUFFLE = 1
INSTANCE = 2


def substream(seed, *key):
    """Return a fresh Philox-backed generator for ``(seed, *key)``."""
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError(f"seed and key entries must be non-negative, got {seed}, {key}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
