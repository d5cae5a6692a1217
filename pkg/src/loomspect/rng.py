"""Deterministic randomness for the training pipeline.

Patch shuffling must reproduce bit-for-bit across platforms and NumPy
versions, so it is driven by SplitMix64 (Steele et al., the seeding generator
from Java's SplittableRandom) and an explicit Fisher-Yates pass instead of
np.random. SplitMix64 is pure 64-bit integer arithmetic with a published
reference sequence, which makes "same seed, same shuffle" a portable promise
rather than a library implementation detail.

Synthetic image generation has no such portability contract and uses
np.random.Generator directly (see evaluation.synth_fabric).
"""

import numpy as np

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Reference SplitMix64 stream over 64-bit unsigned integers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection, bias-free."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        # Rejection zone keeps the draw exactly uniform; at most one extra
        # draw in expectation even for bounds near 2**63.
        limit = _MASK64 - ((_MASK64 + 1) % bound)
        while True:
            v = self.next_u64()
            if v <= limit:
                return v % bound


def derive_seed(master: int, stream: int) -> int:
    """Decorrelated per-stream seed (one per layer) from a master seed."""
    mix = SplitMix64((master & _MASK64) ^ (0xA5A5A5A5A5A5A5A5 + stream))
    return mix.next_u64()


def permutation(n: int, seed: int) -> np.ndarray:
    """Deterministic permutation of range(n) via Fisher-Yates over SplitMix64."""
    rng = SplitMix64(seed)
    idx = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx
