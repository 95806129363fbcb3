"""Deterministic derivation of child seeds from one master seed.

Every consumer of randomness in the pipeline (dataset synthesis, weight
init, fault injection, table repetitions, partner sampling, pairing) gets
its own stream, keyed by a stable integer path. Adding a consumer never
shifts the draws of an existing one, and results are independent of the
order in which jobs actually execute.
"""

from __future__ import annotations

import numpy as np

# Stream tags for the pipeline. One tag per independent consumer.
DATASET = 0
PRETRAIN = 1
CHIP_RATES = 2
CHIP_MAPS = 3
TABLE = 4
FUSION = 5
PAIRING = 6
GROUP_TRAIN = 7


def subseed(master: int, *key: int) -> int:
    """Derive a child seed from `master` and an integer key path.

    Pure function: the same (master, key) always yields the same child.
    """
    seq = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, np.uint32)[0])
