"""Entropy sources.

Every randomized operation in the package takes an ``rng`` argument: any object
with a ``randbytes(n) -> bytes`` method. ``secrets.SystemRandom()`` is the
default. ``SeededRng`` is a deterministic SHA-256 counter-mode generator used
for reproducible runs (``--seed``); it is NOT a substitute for system entropy
in a real election.
"""

from __future__ import annotations

import hashlib
import secrets
from typing import Protocol


class EntropySource(Protocol):
    def randbytes(self, n: int) -> bytes: ...


def system_rng() -> EntropySource:
    return secrets.SystemRandom()


def _encode_label(part: object) -> bytes:
    data = part if isinstance(part, bytes) else str(part).encode()
    return len(data).to_bytes(8, "big") + data


class SeededRng:
    """Deterministic byte stream derived from a seed and a list of labels."""

    def __init__(self, seed: object, *labels: object) -> None:
        h = hashlib.sha256(b"evoting-seeded-rng")
        for part in (seed, *labels):
            h.update(_encode_label(part))
        self._key = h.digest()
        self._counter = 0
        self._buffer = b""

    def randbytes(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(self._key + self._counter.to_bytes(8, "big")).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def fork(self, *labels: object) -> "SeededRng":
        """Independent substream; does not advance this stream."""
        return SeededRng(self._key, *labels)


def randbelow(rng: EntropySource, bound: int) -> int:
    """Uniform integer in [0, bound) by rejection sampling (no modulo bias)."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    if bound == 1:
        return 0
    bits = (bound - 1).bit_length()
    nbytes = (bits + 7) // 8
    mask = (1 << bits) - 1
    while True:
        candidate = int.from_bytes(rng.randbytes(nbytes), "big") & mask
        if candidate < bound:
            return candidate
