"""Soft thresholding onto the probability simplex, its top-k variant, softmax,
and the closed-form Jacobian of the thresholding map.

All routines work on float64.  The row-wise helpers (``*_rows``) operate on
the last axis of a 2-D array and are what the attention and super-resolution
code call; the vector functions are thin wrappers over them so both paths
produce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOPK = 128
DENSE_JACOBIAN_LIMIT = 4096


def _check_vector(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"expected a 1-D similarity vector, got shape {s.shape}")
    if s.size == 0:
        raise ValueError("similarity vector must be non-empty")
    if not np.all(np.isfinite(s)):
        raise ValueError("similarity vector contains non-finite entries")
    return s


def _check_rows(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] == 0:
        raise ValueError(f"expected a non-empty 2-D array of rows, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("similarity rows contain non-finite entries")
    return S


@dataclass(frozen=True)
class SparseWeights:
    """Output of the soft-thresholding operator for one similarity vector."""

    weights: np.ndarray
    support: np.ndarray
    threshold: float
    support_size: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "support_size", int(self.support.size))

    def jacobian_context(self) -> JacobianContext:
        return JacobianContext.from_support(self.support, self.weights.size)


@dataclass(frozen=True)
class JacobianContext:
    """Support indicator of a thresholding result; all the Jacobian needs."""

    characteristic: np.ndarray
    support: np.ndarray
    support_size: int

    @classmethod
    def from_support(cls, support, n: int) -> JacobianContext:
        support = np.asarray(support, dtype=np.intp)
        if support.size == 0:
            raise ValueError("support must contain at least one index")
        c = np.zeros(n, dtype=np.float64)
        c[support] = 1.0
        return cls(characteristic=c, support=support, support_size=int(support.size))

    @classmethod
    def from_characteristic(cls, c) -> JacobianContext:
        c = np.asarray(c, dtype=np.float64)
        if not np.all((c == 0.0) | (c == 1.0)):
            raise ValueError("characteristic vector must be binary")
        return cls.from_support(np.flatnonzero(c), c.size)

    @property
    def n(self) -> int:
        return self.characteristic.size


def _threshold_sorted(z: np.ndarray):
    """Support size and threshold from rows sorted in descending order.

    ``z`` is shifted so that its first column is zero; the shift keeps the
    prefix sums free of the cancellation a large common offset would cause.
    """
    n = z.shape[1]
    cs = np.cumsum(z, axis=1)
    ks = np.arange(1, n + 1, dtype=np.float64)
    cond = ks * z + 1.0 > cs
    # largest k satisfying the condition (k = 1 always does: 0 + 1 > 0)
    t = n - np.argmax(cond[:, ::-1], axis=1)
    rows = np.arange(z.shape[0])
    kappa = (cs[rows, t - 1] - 1.0) / t
    return t, kappa


def soft_threshold_rows(S, k: int | None = None):
    """Row-wise soft thresholding; optionally restricted to the top ``k``.

    Returns ``(weights, kappa, support_size)`` where ``kappa`` is in the
    original (unshifted) coordinates.
    """
    S = _check_rows(S)
    p, n = S.shape
    if k is not None:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if k < n:
            return _topk_rows(S, int(k))
    order = np.argsort(-S, axis=1, kind="stable")
    srt = np.take_along_axis(S, order, axis=1)
    top = srt[:, :1]
    t, kappa_shift = _threshold_sorted(srt - top)
    W = np.maximum((S - top) - kappa_shift[:, None], 0.0)
    return W, kappa_shift + top[:, 0], np.count_nonzero(W, axis=1)


def topk_indices_rows(S: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries per row, ascending index order.

    Ties at the k-th value are broken toward the lowest index, so the
    selection is reproducible and independent of the partition algorithm.
    """
    p, n = S.shape
    kth = -np.partition(-S, k - 1, axis=1)[:, k - 1]
    gt = S > kth[:, None]
    eq = S == kth[:, None]
    need = k - np.count_nonzero(gt, axis=1)
    mask = gt | (eq & (np.cumsum(eq, axis=1) <= need[:, None]))
    return np.nonzero(mask)[1].reshape(p, k)


def _topk_rows(S: np.ndarray, k: int):
    p, n = S.shape
    idx = topk_indices_rows(S, k)
    sub = np.take_along_axis(S, idx, axis=1)
    order = np.argsort(-sub, axis=1, kind="stable")
    srt = np.take_along_axis(sub, order, axis=1)
    top = srt[:, :1]
    t, kappa_shift = _threshold_sorted(srt - top)
    sub_w = np.maximum((sub - top) - kappa_shift[:, None], 0.0)
    W = np.zeros_like(S)
    np.put_along_axis(W, idx, sub_w, axis=1)
    return W, kappa_shift + top[:, 0], np.count_nonzero(sub_w, axis=1)


def _to_sparse(W: np.ndarray, kappa: np.ndarray) -> SparseWeights:
    w = W[0]
    return SparseWeights(weights=w, support=np.flatnonzero(w > 0.0), threshold=float(kappa[0]))


def soft_threshold_exact(s) -> SparseWeights:
    """Euclidean projection of ``s`` onto the probability simplex.

    Sort-based: with ``s`` sorted descending, the support size is the largest
    ``t`` with ``t*s_(t) + 1 > s_(1) + ... + s_(t)``, the threshold is
    ``(s_(1) + ... + s_(t) - 1) / t`` and the output is ``max(s - threshold, 0)``
    in the original order.

    >>> soft_threshold_exact([2.0, 0.0]).weights
    array([1., 0.])
    """
    s = _check_vector(s)
    W, kappa, _ = soft_threshold_rows(s[None, :])
    return _to_sparse(W, kappa)


def soft_threshold_topk(s, k: int = DEFAULT_TOPK) -> SparseWeights:
    """Soft thresholding over only the ``k`` largest entries of ``s``.

    Identical to :func:`soft_threshold_exact` whenever ``k`` is at least the
    exact support size.
    """
    s = _check_vector(s)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    W, kappa, _ = soft_threshold_rows(s[None, :], k)
    return _to_sparse(W, kappa)


def softmax_rows(S, temperature: float = 1.0) -> np.ndarray:
    S = _check_rows(S)
    if temperature != 1.0:
        S = S / temperature
    E = np.exp(S - S.max(axis=1, keepdims=True))
    return E / E.sum(axis=1, keepdims=True)


def softmax(s) -> np.ndarray:
    s = _check_vector(s)
    return softmax_rows(s[None, :])[0]


def jvp(ctx: JacobianContext, r) -> np.ndarray:
    """Jacobian of the thresholding map applied to ``r``.

    Uses the diagonal-minus-rank-one structure, touching only the support:
    ``c * (r - (c.r / |support|))``.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (ctx.n,):
        raise ValueError(f"direction has shape {r.shape}, expected ({ctx.n},)")
    out = np.zeros(ctx.n, dtype=np.float64)
    rs = r[ctx.support]
    out[ctx.support] = rs - rs.sum() / ctx.support_size
    return out


def jacobian_dense(ctx: JacobianContext) -> np.ndarray:
    """Dense ``Diag(c) - c c^T / |support|``.  Test helper only."""
    if ctx.n > DENSE_JACOBIAN_LIMIT:
        raise ValueError(f"dense Jacobian refused for n={ctx.n} > {DENSE_JACOBIAN_LIMIT}")
    c = ctx.characteristic
    return np.diag(c) - np.outer(c, c) / ctx.support_size
