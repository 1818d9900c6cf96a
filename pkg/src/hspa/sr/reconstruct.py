"""Training-free self-similarity super-resolution.

The low-resolution luma is upsampled bicubically; every pixel of that
estimate is then replaced by a fusion of the centre values of candidate
pixels (the whole image, or a clamped square window around it), weighted by
soft thresholding, softmax, or softmax over a random candidate subset.

Features are raw ``(2r+1)^2`` patches of the estimate (reflected borders),
divided by ``bandwidth``.  The similarity is the dot product of the lifted
vectors ``[x, 1]`` (query) and ``[y, -|y|^2 / 2]`` (candidate)::

    s_j = x.y_j - |y_j|^2 / 2 = -|x - y_j|^2 / 2 + |x|^2 / 2

The last term is the same for every candidate of a query, and both weighting
schemes ignore a per-row shift, so weights depend on patch distance only.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from hspa.attention import AttentionConfig, fuse_rows, weights_rows
from hspa.sr.image import Image, rgb_to_ycbcr, ycbcr_to_rgb
from hspa.sr.resample import reflect_index, resize, upsample_bicubic

DEFAULT_WINDOW = 31
DEFAULT_BANDWIDTH = 0.4


@dataclass(frozen=True)
class PatchConfig:
    patch_radius: int = 1
    stride: int = 1
    search: str = "window"
    window: int = DEFAULT_WINDOW
    scale: int = 2
    bandwidth: float = DEFAULT_BANDWIDTH
    mode: AttentionConfig = field(default_factory=AttentionConfig)

    def __post_init__(self):
        if self.patch_radius < 0:
            raise ValueError("patch_radius must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.search not in ("window", "full"):
            raise ValueError(f"search must be 'window' or 'full', got {self.search!r}")
        if self.search == "window" and self.window < 2 * self.patch_radius + 1:
            raise ValueError("window must be at least the patch width")
        if self.scale not in (1, 2, 3, 4):
            raise ValueError("scale must be 1, 2, 3 or 4")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    @classmethod
    def parse_search(cls, text: str) -> tuple[str, int]:
        """``"full"`` or ``"window:<w>"``."""
        if text == "full":
            return "full", DEFAULT_WINDOW
        kind, _, w = text.partition(":")
        if kind != "window" or not w.isdigit():
            raise ValueError(f"bad search spec {text!r}; use 'full' or 'window:<w>'")
        return "window", int(w)


@dataclass
class ReconstructionResult:
    image: Image
    support_sizes: np.ndarray
    candidate_count: int
    estimate: Image
    timing_ms: float = 0.0

    @property
    def mean_support_size(self) -> float:
        return float(self.support_sizes.mean())


def patch_features(x: np.ndarray, radius: int) -> np.ndarray:
    """(H*W, (2r+1)^2) patch vectors with reflected borders."""
    h, w = x.shape
    iy = reflect_index(np.arange(-radius, h + radius), h)
    ix = reflect_index(np.arange(-radius, w + radius), w)
    padded = x[np.ix_(iy, ix)]
    size = 2 * radius + 1
    win = np.lib.stride_tricks.sliding_window_view(padded, (size, size))
    return win.reshape(h * w, size * size)


def candidate_indices(h: int, w: int, cfg: PatchConfig, rows: np.ndarray) -> np.ndarray:
    """Flat candidate indices for each query in ``rows``; same count per row.

    A window is shifted, not cropped, at the border so every query sees the
    same number of candidates.
    """
    if cfg.search == "full":
        ys = np.arange(0, h, cfg.stride)
        xs = np.arange(0, w, cfg.stride)
        grid = (ys[:, None] * w + xs[None, :]).ravel()
        return np.broadcast_to(grid, (rows.size, grid.size))
    wh, ww = min(cfg.window, h), min(cfg.window, w)
    qy, qx = np.divmod(rows, w)
    oy = np.clip(qy - wh // 2, 0, h - wh)
    ox = np.clip(qx - ww // 2, 0, w - ww)
    dy = np.arange(0, wh, cfg.stride)
    dx = np.arange(0, ww, cfg.stride)
    yy = oy[:, None, None] + dy[None, :, None]
    xx = ox[:, None, None] + dx[None, None, :]
    return (yy * w + xx).reshape(rows.size, -1)


def _candidate_count(h: int, w: int, cfg: PatchConfig) -> int:
    if cfg.search == "full":
        return len(range(0, h, cfg.stride)) * len(range(0, w, cfg.stride))
    return len(range(0, min(cfg.window, h), cfg.stride)) * len(range(0, min(cfg.window, w), cfg.stride))


def refine(estimate: np.ndarray, cfg: PatchConfig, threads: int = 1, chunk: int = 128):
    """Non-local refinement of an (H, W) luma estimate.

    Returns the refined array and the per-pixel count of non-zero weights.
    """
    h, w = estimate.shape
    ncand = _candidate_count(h, w, cfg)
    if ncand < 2:
        raise ValueError(f"search space has {ncand} candidate(s); need at least 2")
    feats = patch_features(estimate, cfg.patch_radius) / cfg.bandwidth
    half_sq = -0.5 * (feats * feats).sum(axis=1)
    centres = estimate.ravel()
    n = h * w
    out = np.empty(n)
    support = np.empty(n, dtype=np.int64)

    def work(lo: int):
        rows = np.arange(lo, min(lo + chunk, n))
        idx = candidate_indices(h, w, cfg, rows)
        S = (feats[idx] * feats[rows][:, None, :]).sum(axis=-1) + half_sq[idx]
        W = weights_rows(S, cfg.mode, rows)
        out[rows] = fuse_rows(W, centres[idx][..., None])[:, 0]
        support[rows] = np.count_nonzero(W, axis=1)

    starts = range(0, n, chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for lo in starts:
            work(lo)
    return out.reshape(h, w), support.reshape(h, w)


def reconstruct_detailed(lr: Image, cfg: PatchConfig, threads: int = 1) -> ReconstructionResult:
    t0 = time.perf_counter()
    est = upsample_bicubic(lr, cfg.scale)
    y, support = refine(est.luma, cfg, threads)
    y = np.clip(y, 0.0, 1.0)
    rgb = None
    if lr.rgb is not None:
        ycc = rgb_to_ycbcr(resize(lr.rgb, est.height, est.width))
        ycc[..., 0] = y
        rgb = ycbcr_to_rgb(ycc)
    elapsed = (time.perf_counter() - t0) * 1e3
    return ReconstructionResult(Image(y, rgb), support, _candidate_count(*y.shape, cfg), est, elapsed)


def reconstruct(lr: Image, cfg: PatchConfig, threads: int = 1) -> Image:
    """Upscale ``lr`` by ``cfg.scale`` with non-local refinement of the luma."""
    return reconstruct_detailed(lr, cfg, threads).image
