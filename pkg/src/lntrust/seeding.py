"""Counter-based random streams.

Every random draw in a run comes from a generator keyed by
``(seed, stream, *counters)`` so that the draws of one node/round never
depend on how many numbers another component consumed.
"""

import numpy as np

# stream tags
POOL = 1
PARTITION = 2
VALIDATION = 3
TOPOLOGY = 4
INIT = 10
STAGE1 = 11
SUPERVISED = 12
DISTILL = 13
PROBE = 14
TRUST_INIT = 15
BATCH = 16
DML = 17
IMPORTANCE = 18
BASELINE = 19


def stream(seed, tag, *counters):
    keys = [int(seed), int(tag)] + [int(c) for c in counters]
    return np.random.default_rng(np.random.SeedSequence(keys))
