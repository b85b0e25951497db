"""Tiny, language-portable PRNG stack for reproducible sampling.

PCG32 (XSH-RR output, 64-bit LCG state) seeded through splitmix64, with
FNV-1a for folding dataset names into seeds. Everything is plain integer
arithmetic masked to 64/32 bits, so sequences are identical on any
platform or implementation of these published recipes.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1

_PCG_MULTIPLIER = 6364136223846793005

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 encoding of *text*."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: (new state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Pcg32:
    """PCG-XSH-RR 64/32 with the reference seeding sequence."""

    def __init__(self, initstate: int, initseq: int) -> None:
        self.state = 0
        self.increment = ((initseq << 1) | 1) & _MASK64
        self.next_u32()
        self.state = (self.state + initstate) & _MASK64
        self.next_u32()

    @classmethod
    def from_seed(cls, seed: int) -> "Pcg32":
        """Expand one 64-bit seed into (initstate, initseq) via splitmix64."""
        state, initstate = splitmix64(seed & _MASK64)
        _, initseq = splitmix64(state)
        return cls(initstate, initseq)

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * _PCG_MULTIPLIER + self.increment) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def next_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) without modulo bias."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        threshold = (1 << 32) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by next_below."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]


def episode_seed(dataset_id: str, k: int, seed: int) -> int:
    """Fold the episode coordinates into the 64-bit PCG seed."""
    return (seed ^ fnv1a64(dataset_id) ^ k) & _MASK64


def episode_rng(dataset_id: str, k: int, seed: int) -> Pcg32:
    return Pcg32.from_seed(episode_seed(dataset_id, k, seed))
