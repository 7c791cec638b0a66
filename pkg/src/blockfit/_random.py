import numpy as np


def make_rng(seed, stream: int = 0) -> np.random.Generator:
    """Philox (counter-based, 64-bit) generator for ``(seed, stream)``.

    Distinct streams from one seed are statistically independent, which
    lets a sampler draw auxiliary randomness without shifting its main
    sequence.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))
