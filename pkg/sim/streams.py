"""
Deterministic random streams.

Every draw in a run comes from a generator keyed by (seed, round, client, role),
so results do not depend on the order in which pair rounds execute.
"""

import numpy as np

# Stream roles
INIT = 0
SELECT = 1
DELAY = 2
CLIENT = 3
SERVER = 4
BATCH = 5
PARTITION = 6
EVAL = 7

NO_CLIENT = -1


def stream(seed: int, *key: int) -> np.random.Generator:
    """
    Return an independent generator for the given seed and key.

    Args:
        seed: Global experiment seed
        key: Integers identifying the stream, e.g. (round, client_id, role)

    Returns:
        numpy Generator seeded from SeedSequence(seed, spawn_key=key)
    """
    # SeedSequence requires non-negative spawn keys
    spawn_key = tuple(int(k) + 1 for k in key)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def pair_stream(seed: int, round_num: int, client_id: int, role: int) -> np.random.Generator:
    """Stream for one client-server pair in one global round."""
    return stream(seed, round_num, client_id, role)


def round_stream(seed: int, round_num: int, role: int) -> np.random.Generator:
    """Stream shared by a whole global round (participant selection, delays)."""
    return stream(seed, round_num, NO_CLIENT, role)
