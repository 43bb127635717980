"""Seed schedule.

Every random draw in the package comes from a PCG64 generator seeded by
``SeedSequence(entropy=seed, spawn_key=key)``.  Keys are fixed tuples, so a
stream depends only on ``(seed, key)`` and never on execution order:

=========================  ==========================================
key                        stream
=========================  ==========================================
``(0,)``                   factor loadings
``(1,)``                   heteroscedasticity draws, then permutation
``(2, b)``                 Monte Carlo replication ``b``
``(3,)``                   single path for confidence-band series
``(4, b)``                 fixed-factor unbiasedness replications
=========================  ==========================================

Changing this table changes every output file, so it is part of the file
format contract.
"""

import numpy as np

LOADINGS = (0,)
IDIOSYNCRATIC = (1,)
REPLICATION = 2
BAND_PATH = (3,)
FIXED_FACTOR = 4


def stream(seed, key):
    """Independent generator for ``key`` under master ``seed``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def replication_stream(seed, b):
    return stream(seed, (REPLICATION, b))
