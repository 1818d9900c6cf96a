"""Non-local fusion over a flattened feature map.

Four weighting schemes share one code path: exact soft thresholding,
top-k soft thresholding, softmax over every position, and softmax over a
seeded random subset of positions.  Similarities are plain dot products of
the query and key projections, with no 1/sqrt(d) scaling.

Every reduction is written as an elementwise product followed by a sum over
the last axis (or a sequential cumulative sum for the fused output) instead
of a BLAS call, so a row's result does not depend on how many rows are
processed together or on the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from hspa import prng
from hspa.simplex_ops import DEFAULT_TOPK, soft_threshold_rows, softmax_rows

Mode = Literal["hspa_exact", "hspa_topk", "nla", "nla_random"]
MODES: tuple[str, ...] = ("hspa_exact", "hspa_topk", "nla", "nla_random")
DEFAULT_RANDOM_SUBSET = 512


@dataclass(frozen=True)
class FeatureMap:
    """H x W x C grid of feature vectors; positions flatten row-major."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"feature map must have shape (H, W, C) with H, W, C >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_vectors(cls, vectors, height: int | None = None, width: int | None = None) -> FeatureMap:
        v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if height is None:
            height, width = 1, v.shape[0]
        return cls(v.reshape(height, width, v.shape[1]))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def n(self) -> int:
        return self.height * self.width

    @property
    def vectors(self) -> np.ndarray:
        """The (N, C) row-major flattening."""
        return self.data.reshape(self.n, self.channels)


@dataclass(frozen=True)
class LinearMap:
    """A C_in -> C_out matrix standing in for a learned 1x1 convolution."""

    matrix: np.ndarray
    label: str = "query"

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        if not np.all(np.isfinite(m)):
            raise ValueError(f"{self.label} map has non-finite entries")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, channels: int, label: str = "query") -> LinearMap:
        return cls(np.eye(channels), label)

    @classmethod
    def random_orthogonal(cls, channels: int, seed: int, label: str = "query") -> LinearMap:
        """Seeded random orthogonal matrix (QR of a Gaussian, sign-fixed)."""
        stream = {"query": 0, "key": 1, "value": 2}.get(label, 3)
        g = prng.normal(prng.stream_key(seed, stream), channels * channels).reshape(channels, channels)
        q, r = np.linalg.qr(g)
        return cls(q * np.sign(np.diag(r)), label)

    @property
    def c_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def c_out(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Map rows of ``x`` (..., C_in) to (..., C_out)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.c_in:
            raise ValueError(f"{self.label} map expects {self.c_in} input channels, got {x.shape[-1]}")
        return (x[..., None, :] * self.matrix).sum(axis=-1)


@dataclass(frozen=True)
class Projections:
    query: LinearMap
    key: LinearMap
    value: LinearMap

    @classmethod
    def identity(cls, channels: int) -> Projections:
        return cls(
            LinearMap.identity(channels, "query"),
            LinearMap.identity(channels, "key"),
            LinearMap.identity(channels, "value"),
        )

    @classmethod
    def random_orthogonal(cls, channels: int, seed: int) -> Projections:
        return cls(*(LinearMap.random_orthogonal(channels, seed, lab) for lab in ("query", "key", "value")))


@dataclass(frozen=True)
class AttentionConfig:
    mode: str = "hspa_topk"
    k: int = DEFAULT_TOPK
    m: int = DEFAULT_RANDOM_SUBSET
    seed: int = 0
    # excluded from the acceptance runs; similarities are divided by it
    temperature: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown attention mode {self.mode!r}; expected one of {MODES}")
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


def _check_maps(fmap: FeatureMap, maps: Projections):
    c = fmap.channels
    for lm in (maps.query, maps.key, maps.value):
        if lm.c_in != c:
            raise ValueError(f"{lm.label} map expects {lm.c_in} channels, feature map has {c}")
    if maps.query.c_out != maps.key.c_out:
        raise ValueError("query and key maps must share an output dimension")


def _check_index(i: int, n: int):
    if not 0 <= i < n:
        raise IndexError(f"query index {i} outside [0, {n})")


def similarity_row(i: int, fmap: FeatureMap, phi_q: LinearMap, phi_k: LinearMap) -> np.ndarray:
    """Dot-product similarities between position ``i`` and every position."""
    _check_index(i, fmap.n)
    if phi_q.c_in != fmap.channels or phi_k.c_in != fmap.channels:
        raise ValueError("projection input size does not match feature channels")
    if phi_q.c_out != phi_k.c_out:
        raise ValueError("query and key maps must share an output dimension")
    x = fmap.vectors
    q = phi_q.apply(x[i])
    return (phi_k.apply(x) * q).sum(axis=-1)


def random_subset_rows(seed: int, rows: np.ndarray, n: int, m: int) -> np.ndarray:
    """Per-row uniform sample of ``min(m, n)`` distinct indices in [0, n).

    Row ``r`` draws one 64-bit key per candidate from stream ``rows[r]`` of
    ``seed`` and keeps the candidates with the smallest keys (ties to the
    lower index).  Returned indices are sorted ascending.
    """
    rows = np.asarray(rows, dtype=np.uint64)
    if m >= n:
        return np.broadcast_to(np.arange(n), (rows.size, n)).copy()
    keys = prng.raw(prng.stream_key(seed, rows), n)
    order = np.argsort(keys, axis=1, kind="stable")[:, :m]
    return np.sort(order, axis=1)


def weights_rows(S: np.ndarray, cfg: AttentionConfig, rows=None) -> np.ndarray:
    """Attention weights for a block of similarity rows under ``cfg``.

    ``rows`` are the query indices of the block; only ``nla_random`` uses
    them, to pick each row's PRNG stream.
    """
    if cfg.temperature != 1.0:
        S = S / cfg.temperature
    if cfg.mode == "hspa_exact":
        return soft_threshold_rows(S)[0]
    if cfg.mode == "hspa_topk":
        return soft_threshold_rows(S, cfg.k)[0]
    if cfg.mode == "nla":
        return softmax_rows(S)
    p, n = S.shape
    if rows is None:
        rows = np.arange(p)
    idx = random_subset_rows(cfg.seed, rows, n, cfg.m)
    W = np.zeros_like(S)
    np.put_along_axis(W, idx, softmax_rows(np.take_along_axis(S, idx, axis=1)), axis=1)
    return W


def fuse_rows(W: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``W @ values`` accumulated in ascending candidate order.

    ``W`` is (P, N); ``values`` is (N, C) shared by all rows or (P, N, C).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    out = np.empty((W.shape[0], values.shape[-1]))
    for c in range(values.shape[-1]):
        out[:, c] = np.cumsum(W * values[..., c], axis=1)[:, -1]
    return out


def attention_weights(i: int, fmap: FeatureMap, maps: Projections, cfg: AttentionConfig) -> np.ndarray:
    """Weight vector over all N positions used to fuse query ``i``."""
    _check_maps(fmap, maps)
    s = similarity_row(i, fmap, maps.query, maps.key)
    return weights_rows(s[None, :], cfg, np.array([i]))[0]


def _fuse(i, fmap, maps, cfg) -> np.ndarray:
    w = attention_weights(i, fmap, maps, cfg)
    return fuse_rows(w[None, :], maps.value.apply(fmap.vectors))[0]


def hspa_fuse(i: int, fmap: FeatureMap, maps: Projections, cfg: AttentionConfig | None = None) -> np.ndarray:
    """Soft-threshold-weighted sum of value vectors for query ``i``.

    ``cfg.mode`` selects exact or top-k thresholding; any other mode is an
    error here.
    """
    cfg = cfg or AttentionConfig(mode="hspa_exact")
    if cfg.mode not in ("hspa_exact", "hspa_topk"):
        raise ValueError(f"hspa_fuse needs an hspa_* mode, got {cfg.mode!r}")
    return _fuse(i, fmap, maps, cfg)


def nla_fuse(i: int, fmap: FeatureMap, maps: Projections, cfg: AttentionConfig | None = None) -> np.ndarray:
    """Softmax-weighted sum over all positions."""
    cfg = cfg or AttentionConfig()
    return _fuse(i, fmap, maps, _with_mode(cfg, "nla"))


def nla_random_fuse(i: int, fmap: FeatureMap, maps: Projections, cfg: AttentionConfig | None = None) -> np.ndarray:
    """Softmax-weighted sum over ``min(m, N)`` seeded random positions."""
    cfg = cfg or AttentionConfig()
    return _fuse(i, fmap, maps, _with_mode(cfg, "nla_random"))


def _with_mode(cfg: AttentionConfig, mode: str) -> AttentionConfig:
    if cfg.mode == mode:
        return cfg
    return AttentionConfig(mode=mode, k=cfg.k, m=cfg.m, seed=cfg.seed, temperature=cfg.temperature)


def attend_full(
    fmap: FeatureMap,
    maps: Projections,
    cfg: AttentionConfig,
    threads: int = 1,
    chunk: int = 256,
) -> FeatureMap:
    """Fused response at every position, as an H x W x C_v map.

    Rows are split into chunks that may run on a thread pool; each chunk
    writes a disjoint slice of the output.
    """
    _check_maps(fmap, maps)
    x = fmap.vectors
    q = maps.query.apply(x)
    k = maps.key.apply(x)
    v = maps.value.apply(x)
    out = np.empty((fmap.n, maps.value.c_out))

    def work(lo: int):
        hi = min(lo + chunk, fmap.n)
        S = (q[lo:hi, None, :] * k[None, :, :]).sum(axis=-1)
        W = weights_rows(S, cfg, np.arange(lo, hi))
        out[lo:hi] = fuse_rows(W, v)

    starts = range(0, fmap.n, chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for lo in starts:
            work(lo)
    return FeatureMap(out.reshape(fmap.height, fmap.width, -1))
