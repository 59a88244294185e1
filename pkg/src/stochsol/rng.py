"""Reproducible random streams keyed by ``(seed, stream_id)``.

Each stream is a Philox4x64 counter-based generator whose 128-bit key packs
the seed in the low word and the stream id in the high word, so distinct
pairs never share a keystream and the same pair always replays it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError

_U64 = (1 << 64) - 1


def philox_key(seed: int, stream_id: int) -> int:
    if not (0 <= seed <= _U64 and 0 <= stream_id <= _U64):
        raise ArgumentError("seed and stream_id must be unsigned 64-bit integers")
    return (stream_id << 64) | seed


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        philox_key(self.seed, self.stream_id)

    def bit_generator(self) -> np.random.Philox:
        return np.random.Philox(key=philox_key(self.seed, self.stream_id))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(self.bit_generator())


def as_generator(rng) -> np.random.Generator:
    """Accept an :class:`RngStream`, a ``Generator`` or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise ArgumentError(f"cannot build a random stream from {type(rng).__name__}")


class StreamFactory:
    """Re-keys a single Philox instance in place for each stream.

    Equivalent to ``RngStream(seed, stream_id).bit_generator()`` but about
    eight times cheaper, which matters when every Monte Carlo sample owns
    its own stream.
    """

    def __init__(self):
        self.bit_generator = np.random.Philox(key=0)
        self.generator = np.random.Generator(self.bit_generator)
        self._state = self.bit_generator.state

    def reset(self, seed: int, stream_id: int) -> np.random.Generator:
        st = self._state
        st["state"]["counter"][:] = 0
        st["state"]["key"][0] = seed
        st["state"]["key"][1] = stream_id
        st["buffer"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self.bit_generator.state = st
        return self.generator
