"""Counter-based random streams derived from one 64-bit seed.

Stream ``i`` uses the Philox key ``seed + i * 2**64`` so every task draws the
same numbers no matter which worker runs it or in which order.
"""

import numpy as np

MAX_SEED = 2 ** 64 - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, index: int = 0) -> np.random.Generator:
    seed = check_seed(seed)
    if index < 0:
        raise ValueError("stream index must be non-negative")
    return np.random.Generator(np.random.Philox(key=seed + (int(index) << 64)))
