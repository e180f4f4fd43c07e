"""Counter-based uniform random numbers.

Every draw index owns an independent SplitMix64 sequence whose state is
derived from ``(seed, replicate, draw)``.  Values therefore depend only on
those keys and on the position within the sequence, never on the order in
which draws are generated, which makes vectorized and parallel simulation
reproducible.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S12 = (np.uint64(s) for s in (30, 27, 31, 12))
_MASK = (1 << 64) - 1


def mix64(x):
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S30)) * _M1
        x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def derive_seed(seed: int, *keys: int) -> int:
    """Hash a seed and a sequence of nonnegative integer keys into a new seed."""
    state = np.array([seed & _MASK], dtype=np.uint64)
    with np.errstate(over="ignore"):
        for k in keys:
            state = mix64(mix64(state + _GAMMA) ^ np.uint64(k & _MASK))
    return int(state[0])


def to_unit_open(bits) -> np.ndarray:
    """Map 64 random bits to the open interval (0, 1)."""
    # 52 bits centred in their cells: the extremes 2**-53 and 1 - 2**-53 are
    # exactly representable, so neither 0 nor 1 can occur
    return ((bits >> _S12).astype(np.float64) + 0.5) * 2.0**-52


class PairStreams:
    """Independent uniform streams indexed by draw, for one (seed, replicate).

    ``uniform(draw, slot)`` returns the ``slot``-th value of the stream of
    each ``draw``.  Both arguments broadcast.
    """

    def __init__(self, seed: int, replicate: int = 0):
        self.seed = int(seed)
        self.replicate = int(replicate)
        self._base = np.uint64(derive_seed(self.seed, self.replicate))

    def keys(self, draw) -> np.ndarray:
        d = np.asarray(draw, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return mix64(mix64(self._base + _GAMMA * (d + np.uint64(1))) ^ self._base)

    def uniform(self, draw, slot) -> np.ndarray:
        k = self.keys(draw)
        s = np.asarray(slot, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return to_unit_open(mix64(k + _GAMMA * (s + np.uint64(1))))
