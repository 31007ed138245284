"""Keyed, counter-based random streams.

A stream is identified by ``(seed, stream)``; both are 64-bit integers that
together form the 128-bit Philox key, so every pair maps to a distinct,
platform-independent sequence. Sub-streams are derived by hashing a key
path, which lets parallel workers draw from disjoint streams without any
shared state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_U64 = 1 << 64


def _hash64(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, (int, np.integer)):
            h.update(b"i" + int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, str):
            data = part.encode()
            h.update(b"s" + len(data).to_bytes(4, "little") + data)
        else:
            raise TypeError(f"stream keys must be int or str, got {type(part).__name__}")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value < _U64:
                raise ValidationError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(key=self.seed | (self.stream << 64)))

    def substream(self, *keys) -> "RngStream":
        """Child stream addressed by ``keys`` (ints or strings)."""
        return RngStream(self.seed, _hash64(self.stream, *keys))
