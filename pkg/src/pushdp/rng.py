"""Deterministic random-stream derivation.

Every stochastic draw in a run pulls from a generator derived from
(master_seed, node_id, t, purpose), so results are reproducible bit for bit
and independent of any node evaluation order.
"""

import numpy as np

# purpose tags; fixed small ints so stream identities never move
INIT = 0
BATCH = 1
NOISE = 2
PARTITION = 3
DATA = 4
THEORY = 5


def stream(master_seed: int, node_id: int = 0, t: int = 0, purpose: int = 0) -> np.random.Generator:
    """Return a fresh Generator for one (seed, node, step, purpose) slot."""
    ss = np.random.SeedSequence((int(master_seed), int(node_id), int(t), int(purpose)))
    return np.random.default_rng(ss)
