"""Counter-based SplitMix64 generator shared by every stochastic routine.

The generator is SplitMix64 (Steele, Lea & Flood 2014).  Output ``i`` of a
stream with key ``key`` is::

    mix64(key + (i + 1) * 0x9E3779B97F4A7C15)    (mod 2**64)

which is exactly the sequence produced by the sequential SplitMix64 state
update started from ``key``.  Because each output depends only on
``(key, i)``, whole blocks are generated with vectorised numpy arithmetic,
and the result never depends on how work is split across threads.

Independent streams are derived from a master seed with::

    base = mix64(seed + GOLDEN)            # first output of state `seed`
    stream_key(seed, stream) = mix64(base + (stream + 1) * GOLDEN)

Uniform doubles use the top 53 bits: ``(x >> 11) * 2**-53`` in [0, 1).
Standard normals use Box-Muller on consecutive output pairs ``(2j, 2j+1)``::

    u1 = 1 - uniform(x[2j])        # in (0, 1]
    u2 = uniform(x[2j+1])
    z[2j]   = sqrt(-2 ln u1) cos(2 pi u2)
    z[2j+1] = sqrt(-2 ln u1) sin(2 pi u2)
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def mix64(z):
    """SplitMix64 finaliser applied elementwise to a uint64 array."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream):
    """Key of sub-stream ``stream`` (int or uint64 array) of master ``seed``."""
    stream = np.asarray(stream, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = mix64(np.uint64(int(seed) & _MASK64) + GOLDEN)
        return mix64(base + (stream + np.uint64(1)) * GOLDEN)


def raw(key, count: int, offset: int = 0) -> np.ndarray:
    """``count`` consecutive outputs of each stream in ``key``.

    ``key`` may be a scalar or an array of shape ``S``; the result has shape
    ``S + (count,)``.
    """
    key = np.asarray(key, dtype=np.uint64)
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(key[..., None] + idx * GOLDEN)


def uniform(key, count: int, offset: int = 0) -> np.ndarray:
    """Doubles in [0, 1) from the top 53 bits of each output."""
    return (raw(key, count, offset) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def normal(key, count: int) -> np.ndarray:
    """Standard-normal variates via Box-Muller over output pairs."""
    pairs = (count + 1) // 2
    u = uniform(key, 2 * pairs)
    u1 = 1.0 - u[..., 0::2]
    u2 = u[..., 1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    z = np.empty(u.shape, dtype=np.float64)
    z[..., 0::2] = rad * np.cos(ang)
    z[..., 1::2] = rad * np.sin(ang)
    return z[..., :count]


def normal_rows(seed: int, rows: int, n: int, first_row: int = 0) -> np.ndarray:
    """Matrix of normals where row ``t`` comes from stream ``first_row + t``."""
    keys = stream_key(seed, np.arange(first_row, first_row + rows, dtype=np.uint64))
    return normal(keys, n)
