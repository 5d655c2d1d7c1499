"""Counter-based random streams.

Every draw is a pure function of ``(seed, stream, domain, counter)``: a
SplitMix64 hash chain produces a 64-bit word, the top 53 bits give an
open-interval uniform.  Paths therefore own their randomness outright and
results do not depend on how paths are batched or scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_MUL = np.uint64(0xD1B54A32D192ED03)
_DOMAIN_MUL = np.uint64(0x8CB92BA72F3D8DD7)
_TWO53 = 2.0 ** -53

# domains: independent sub-streams of one path
JUMP_TIME, JUMP_RADIUS, JUMP_DIRECTION, JUMP_ACCEPT = 0, 1, 2, 3
BROWNIAN, SMALL_JUMP = 4, 5
LARGE_TIME, LARGE_RADIUS, LARGE_DIRECTION, LARGE_ACCEPT = 6, 7, 8, 9


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, streams, domain: int) -> np.ndarray:
    """64-bit keys for ``(seed, stream, domain)``; vectorised over streams."""
    with np.errstate(over="ignore"):
        s = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        s = _mix64(s ^ (np.uint64(domain + 1) * _DOMAIN_MUL))
        st = np.asarray(streams, dtype=np.uint64)
        return _mix64(s ^ ((st + np.uint64(1)) * _STREAM_MUL))


def uniforms(keys, counters) -> np.ndarray:
    """Uniforms in (0, 1) for broadcast ``keys`` and ``counters``."""
    with np.errstate(over="ignore"):
        k = np.asarray(keys, dtype=np.uint64)
        c = np.asarray(counters, dtype=np.uint64)
        w = _mix64(k + (c + np.uint64(1)) * _GOLDEN)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO53


def normals(keys, counters) -> np.ndarray:
    return special.ndtri(uniforms(keys, counters))


@dataclass
class RngStream:
    """Sequential view of one ``(seed, stream)`` pair.

    >>> a = RngStream(7, 3); b = RngStream(7, 3)
    >>> bool((a.uniform(4) == b.uniform(4)).all())
    True
    """

    seed: int
    stream: int = 0
    counter: int = 0
    domain: int = 0

    def _take(self, n):
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        return idx

    def uniform(self, n: int = 1) -> np.ndarray:
        key = stream_keys(self.seed, self.stream, self.domain)
        return uniforms(key, self._take(n))

    def normal(self, n: int = 1) -> np.ndarray:
        return special.ndtri(self.uniform(n))

    def exponential(self, n: int = 1) -> np.ndarray:
        return -np.log(self.uniform(n))

    def spawn(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream, 0, self.domain)
