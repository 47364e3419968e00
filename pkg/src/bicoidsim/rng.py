"""Seeded uniform streams shared by the Python reference paths and the jitted kernels.

Every engine consumes uniforms strictly sequentially from a :class:`UniformStream`.
The stream buffers raw PCG64 doubles in ``[0, 1)``; readers map each one into
the open interval with :func:`open_unit`. The values a given seed produces do
not depend on how the stream is chunked.
"""
from __future__ import annotations

import hashlib
import math

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def open_unit(u):
    """Map a raw double in [0, 1) to the midpoint of its 2**-52 cell, inside (0, 1)."""
    return (math.floor(u * 4503599627370496.0) + 0.5) * 2.220446049250313e-16


def make_generator(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` and an optional spawn path ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def key_from_values(values) -> int:
    """Stable 64-bit key from a tuple of parameter values."""
    text = ",".join(repr(round(float(v), 12)) for v in values)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


class UniformStream:
    """Sequential stream of uniforms backed by a refillable buffer."""

    def __init__(self, gen: np.random.Generator | int, chunk: int = 1 << 16):
        if not isinstance(gen, np.random.Generator):
            gen = make_generator(gen)
        self._gen = gen
        self._chunk = int(chunk)
        self.buffer = np.empty(0, dtype=np.float64)
        self.pos = 0
        self.drawn = 0

    def window(self, need: int) -> tuple[np.ndarray, int]:
        """Return ``(buffer, pos)`` with at least ``need`` unread raw draws."""
        left = self.buffer.size - self.pos
        if left < need:
            size = left + max(self._chunk, need - left)
            fresh = np.empty(size, dtype=np.float64)
            fresh[:left] = self.buffer[self.pos:]
            self._gen.random(out=fresh[left:])
            self.buffer = fresh
            self.pos = 0
        return self.buffer, self.pos

    def advance(self, new_pos: int) -> None:
        if new_pos < self.pos or new_pos > self.buffer.size:
            raise ValueError("stream position moved backwards or past the buffer")
        self.drawn += new_pos - self.pos
        self.pos = new_pos

    def random(self) -> float:
        """Next uniform strictly inside (0, 1)."""
        buf, pos = self.window(1)
        self.advance(pos + 1)
        return float(open_unit(buf[pos]))
