"""Counter-based random streams.

Every walk owns the stream ``(master_seed, stream_index)``; the ``d``-th
uniform of that stream is a pure function of the triple
``(master_seed, stream_index, d)``, computed with the Philox4x32-10 block
cipher. Because nothing is carried between draws except the position
counter, any subset of walks can be replayed on any worker in any order.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_SHIFT32 = np.uint64(32)
_SHIFT11 = np.uint64(11)
_TWO_M53 = 2.0**-53


def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Philox4x32 with 10 rounds on arrays of 32-bit words held in ``uint64``."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    k0 &= 0xFFFFFFFF
    k1 &= 0xFFFFFFFF
    for r in range(10):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK,
        )
    return c0, c1, c2, c3


def uniforms(master_seed: int, streams, positions) -> np.ndarray:
    """Uniform variates on the open interval (0, 1).

    ``streams`` and ``positions`` broadcast together; element ``j`` is draw
    number ``positions[j]`` of stream ``streams[j]``.
    """
    seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    s = np.asarray(streams, dtype=np.uint64)
    p = np.asarray(positions, dtype=np.uint64)
    s, p = np.broadcast_arrays(s, p)
    x0, x1, _, _ = philox4x32(p & _MASK, p >> _SHIFT32, s & _MASK, s >> _SHIFT32, seed, seed >> 32)
    bits = ((x0 << _SHIFT32) | x1) >> _SHIFT11
    return (bits.astype(np.float64) + 0.5) * _TWO_M53


class RngStream:
    """Sequential view of one stream: a seed, a stream index and a position."""

    __slots__ = ("master_seed", "stream_index", "position")

    def __init__(self, master_seed: int, stream_index: int, position: int = 0) -> None:
        if stream_index < 0:
            raise ValueError("stream_index must be non-negative")
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_index = int(stream_index)
        self.position = int(position)

    def uniform(self, size: int | None = None):
        """Next uniform (or ``size`` uniforms) from the stream."""
        count = 1 if size is None else int(size)
        pos = np.arange(self.position, self.position + count, dtype=np.uint64)
        out = uniforms(self.master_seed, self.stream_index, pos)
        self.position += count
        return float(out[0]) if size is None else out

    def normal(self, size: int | None = None):
        """Standard normal variates by inversion of the uniform draws."""
        u = self.uniform(size)
        return float(ndtri(u)) if size is None else ndtri(u)

    def spawn(self, offset: int) -> "RngStream":
        """An independent stream at ``stream_index + offset`` with the same seed."""
        return RngStream(self.master_seed, self.stream_index + offset)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.master_seed}, stream={self.stream_index}, position={self.position})"
