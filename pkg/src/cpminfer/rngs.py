"""Counter-based random number streams.

All randomness in the package flows through Philox generators keyed by a
user seed plus an explicit spawn key, so independent work items (chain
replications, study cells, reference Monte Carlo runs) own collision-free
substreams and results do not depend on scheduling order.
"""

import numpy as np


def substream(seed, *key):
    """Return a Generator for the substream identified by ``(seed, *key)``.

    Parameters
    ----------
    seed : int
        Global experiment seed.
    *key : int
        Optional spawn key components identifying the work item.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))
