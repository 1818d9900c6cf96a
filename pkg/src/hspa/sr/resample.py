"""Separable Gaussian blur and Catmull-Rom bicubic resampling.

Resizing follows the usual image-processing convention: output pixel ``x``
samples the input at ``(x + 0.5) / scale - 0.5``; when shrinking, the kernel
is widened by the shrink factor (anti-aliasing).  Out-of-range taps reflect
about the image edge (``abcd|dcba``).  Kernel rows are normalised to sum to
one, so constant images stay constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hspa.sr.image import Image

CUBIC_A = -0.5


def cubic_kernel(x, a: float = CUBIC_A) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def reflect_index(idx, n: int) -> np.ndarray:
    """Map integer positions onto [0, n) by half-sample symmetric reflection."""
    idx = np.asarray(idx)
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def resize_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) interpolation matrix along one axis."""
    scale = n_out / n_in
    support_scale = min(scale, 1.0)
    width = 2.0 / support_scale
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    first = np.floor(centers - width).astype(int)
    taps = int(np.ceil(2 * width)) + 2
    pos = first[:, None] + np.arange(taps)[None, :]
    k = cubic_kernel((centers[:, None] - pos) * support_scale)
    k /= k.sum(axis=1, keepdims=True)
    M = np.zeros((n_out, n_in))
    rows = np.broadcast_to(np.arange(n_out)[:, None], pos.shape)
    np.add.at(M, (rows, reflect_index(pos, n_in)), k)
    return M


def _apply_axes(x: np.ndarray, My: np.ndarray, Mx: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk...,lk->il...", My, x, Mx)


def resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bicubic resize of an (H, W) or (H, W, C) array."""
    h, w = x.shape[:2]
    if (out_h, out_w) == (h, w):
        return np.array(x, dtype=np.float64)
    return _apply_axes(np.asarray(x, dtype=np.float64), resize_weights(h, out_h), resize_weights(w, out_w))


def gaussian_kernel1d(sigma: float, truncate: float = 4.0) -> np.ndarray:
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur truncated at 4 sigma with reflected borders."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    k = gaussian_kernel1d(sigma)
    r = k.size // 2
    out = np.asarray(x, dtype=np.float64)
    for axis in (0, 1):
        n = out.shape[axis]
        idx = reflect_index(np.arange(-r, n + r), n)
        padded = np.take(out, idx, axis=axis)
        moved = np.moveaxis(padded, axis, -1)
        windows = np.lib.stride_tricks.sliding_window_view(moved, k.size, axis=-1)
        out = np.moveaxis(windows @ k, -1, axis)
    return out


def _clip_image(luma: np.ndarray, rgb: np.ndarray | None) -> Image:
    return Image(np.clip(luma, 0.0, 1.0), None if rgb is None else np.clip(rgb, 0.0, 1.0))


@dataclass(frozen=True)
class DegradationSpec:
    kind: str = "bicubic"
    scale: int = 2
    gaussian_sigma: float = 1.6

    def __post_init__(self):
        if self.kind not in ("bicubic", "blur_bicubic"):
            raise ValueError(f"unknown degradation {self.kind!r}")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if self.kind == "blur_bicubic" and not self.gaussian_sigma > 0:
            raise ValueError("gaussian_sigma must be positive for blur_bicubic")


def degrade(img: Image, spec: DegradationSpec) -> Image:
    """Optional Gaussian blur then bicubic decimation by ``spec.scale``."""
    s = spec.scale
    if img.height % s or img.width % s:
        raise ValueError(f"image {img.shape} not divisible by scale {s}; crop first")

    def one(x):
        if spec.kind == "blur_bicubic":
            x = gaussian_blur(x, spec.gaussian_sigma)
        return resize(x, x.shape[0] // s, x.shape[1] // s)

    if img.rgb is not None:
        rgb = np.clip(one(img.rgb), 0.0, 1.0)
        return Image.from_rgb(rgb)
    return _clip_image(one(img.luma), None)


def upsample_bicubic(img: Image, scale: int) -> Image:
    if scale < 1:
        raise ValueError("scale must be >= 1")
    h, w = img.height * scale, img.width * scale
    rgb = None if img.rgb is None else resize(img.rgb, h, w)
    return _clip_image(resize(img.luma, h, w), rgb)
