"""Sparse simplex-projection attention operators and a patch-based
self-similarity super-resolution demo built on them."""

from hspa.simplex_ops import (
    JacobianContext,
    SparseWeights,
    jacobian_dense,
    jvp,
    soft_threshold_exact,
    soft_threshold_topk,
    softmax,
)

__all__ = [
    "JacobianContext",
    "SparseWeights",
    "jacobian_dense",
    "jvp",
    "soft_threshold_exact",
    "soft_threshold_topk",
    "softmax",
]
__version__ = "0.1.0"
