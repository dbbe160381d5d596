"""Portable, seedable pseudo-random generator.

Everything stochastic in the toolkit (synthetic data, weight init, shuffling,
augmentation draws) goes through this generator so that results reproduce
bit-for-bit across runs, platforms and reimplementations in other languages.

The algorithm is the splitmix64 counter generator (a 64-bit xorshift-multiply
scheme). State advances along a Weyl sequence and each output is a finalizer
of the state:

    state   <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z       <- state
    z       <- ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z       <- ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output  <- z XOR (z >> 31)

Uniform doubles take the top 53 bits: u = (output >> 11) * 2^-53, in [0, 1).
Bounded integers use the Lemire multiply-shift: (output * n) >> 64.

Because the state is a counter, a batch of n draws can be produced in one
vectorized pass without changing the sequence, which keeps bulk noise
generation fast while staying identical to n scalar calls.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO53_INV = 2.0 ** -53


def _mix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return x ^ (x >> 31)


class Prng:
    """splitmix64 stream; see module docstring for the exact recurrence."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self._state = seed & _MASK64

    @classmethod
    def _from_state(cls, state: int) -> "Prng":
        rng = cls(0)
        rng._state = state & _MASK64
        return rng

    def spawn(self, *keys: int) -> "Prng":
        """Derive an independent child stream from integer keys.

        Children are decorrelated from the parent and from siblings with
        different keys; the parent's own sequence is not consumed.
        """
        s = _mix64(self._state ^ 0x5851F42D4C957F2D)
        for k in keys:
            if k < 0:
                raise ValueError(f"spawn keys must be non-negative, got {k}")
            s = _mix64((s + _GAMMA) ^ _mix64(k))
        return Prng._from_state(s)

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def random(self, size=None):
        """Uniform doubles in [0, 1); scalar when size is None."""
        if size is None:
            return (self.next_u64() >> 11) * _TWO53_INV
        n = int(np.prod(size))
        out = self._bulk_u64(n) >> np.uint64(11)
        vals = out.astype(np.float64) * _TWO53_INV
        return vals.reshape(size)

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None):
        return lo + (hi - lo) * self.random(size)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        return (self.next_u64() * n) >> 64

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx

    def _bulk_u64(self, n: int) -> np.ndarray:
        # Same sequence as n scalar next_u64 calls, computed in one pass.
        with np.errstate(over="ignore"):
            counters = (
                np.uint64(self._state)
                + np.uint64(_GAMMA) * np.arange(1, n + 1, dtype=np.uint64)
            )
            z = (counters ^ (counters >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self._state = (self._state + _GAMMA * n) & _MASK64
        return z
