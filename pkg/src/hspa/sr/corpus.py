"""Synthetic self-similar test images.

Each image is rendered with 4x4 supersampling and quantised to 8 bits, so it
round-trips through PGM unchanged.  Periods are deliberately non-integer so
no two patches are exact copies of each other.
"""

from __future__ import annotations

import numpy as np

from hspa.sr.image import Image

SIZE = 64
_SS = 4
_LO, _HI = 0.15, 0.85


def _grid(size: int):
    t = (np.arange(size * _SS) + 0.5) / _SS
    return np.meshgrid(t, t, indexing="ij")


def _finish(mask: np.ndarray, size: int) -> Image:
    v = _LO + (_HI - _LO) * mask.astype(np.float64)
    v = v.reshape(size, _SS, size, _SS).mean(axis=(1, 3))
    return Image(np.rint(v * 255.0) / 255.0)


def stripes(size: int = SIZE, period: float = 7.3, angle_deg: float = 20.0) -> Image:
    y, x = _grid(size)
    a = np.deg2rad(angle_deg)
    u = x * np.cos(a) + y * np.sin(a)
    return _finish(np.mod(u, period) < period / 2, size)


def checkerboard(size: int = SIZE, cell: float = 5.6, angle_deg: float = 10.0) -> Image:
    y, x = _grid(size)
    a = np.deg2rad(angle_deg)
    u = x * np.cos(a) + y * np.sin(a)
    v = -x * np.sin(a) + y * np.cos(a)
    return _finish((np.floor(u / cell) + np.floor(v / cell)) % 2 == 0, size)


def brick(size: int = SIZE, brick_w: float = 13.4, brick_h: float = 6.7, mortar: float = 1.3) -> Image:
    y, x = _grid(size)
    row = np.floor(y / brick_h)
    xs = x + (row % 2) * brick_w / 2
    in_mortar = (np.mod(y, brick_h) < mortar) | (np.mod(xs, brick_w) < mortar)
    return _finish(~in_mortar, size)


CORPUS = {"stripes": stripes, "checkerboard": checkerboard, "brick": brick}


def corpus() -> dict[str, Image]:
    return {name: make() for name, make in CORPUS.items()}
