"""Counter-based seed derivation.

Every stochastic routine takes an explicit integer seed.  Sub-streams are
obtained with :func:`derive_seed`, a splitmix64 finalizer applied to
``root + golden * (index + 1)``.  Both steps are bijections of the 64-bit
integers, so the map is injective in ``index`` for a fixed root.
"""
import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def derive_seed(root: int, index: int) -> int:
    z = (root + _GOLDEN * (index + 1)) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seeds(root: int, indices) -> np.ndarray:
    """Vectorized :func:`derive_seed` over an integer array."""
    idx = np.asarray(indices, dtype=np.uint64)
    z = np.uint64(root & MASK64) + np.uint64(_GOLDEN) * (idx + np.uint64(1))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def seed_path(root: int, *path: int) -> int:
    """Fold a sequence of indices into a single derived seed."""
    s = root & MASK64
    for p in path:
        s = derive_seed(s, p)
    return s


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


# stream tags, so different consumers of one root seed never share draws
STREAM_START = 1
STREAM_REFERENCE = 2
STREAM_SAMPLES = 3
STREAM_INNER = 4
STREAM_PAIRS = 5
STREAM_INTERVALS = 6
