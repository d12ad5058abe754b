"""Counter-based random-number streams.

Every stochastic operation in the package draws from its own Philox
stream, derived deterministically from ``(seed, tag, *ids)``.  Results
are therefore bit-reproducible regardless of execution order: particles
can be processed in any order or in parallel without changing a run,
and two runs with the same seed and configuration produce identical
output.
"""

import numpy as np

# Stream tags.  One per draw site; the remaining ids identify the step,
# round or iteration within that site.
INIT = 1
MOVE = 2
RESAMPLE = 3
MALA = 4
TRAIN = 5
VI = 6
NET_INIT = 7
CLOUD = 8
SDE = 9
ROUND = 10
EVAL = 11


def derive_seed(seed: int, tag: int, *ids: int) -> int:
    """A fresh integer seed derived from ``(seed, tag, *ids)``.

    Used where a whole sub-run (not just one draw site) needs its own
    seed, e.g. each refinement round's sampler run.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag, *map(int, ids)))
    return int(seq.generate_state(2, dtype=np.uint32)[0])


def stream(seed: int, tag: int, *ids: int) -> np.random.Generator:
    """Return the generator for stream ``(seed, tag, *ids)``.

    The same arguments always yield a generator producing the same
    variates; distinct arguments yield statistically independent
    streams.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag, *map(int, ids)))
    return np.random.Generator(np.random.Philox(seq))
