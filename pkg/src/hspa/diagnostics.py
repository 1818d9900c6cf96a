"""Monte-Carlo diagnostics: softmax flattening with sequence length, and the
order-statistic bound on the support size of soft thresholding.

Trial ``t`` always draws its scores from PRNG stream ``t`` of the master seed,
so results are independent of batching and thread count.

CSV schemas (one header row, then one row per length / k)::

    length,mean_max_prob,mean_entropy,mean_support_st
    k,p_support_gt_k,p_gap_lt_inv_k
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hspa import prng
from hspa.simplex_ops import soft_threshold_rows, softmax_rows

FLATNESS_FIELDS = ("length", "mean_max_prob", "mean_entropy", "mean_support_st")
BOUND_FIELDS = ("k", "p_support_gt_k", "p_gap_lt_inv_k")
_BATCH = 4096


@dataclass(frozen=True)
class FlatnessProfile:
    sequence_lengths: list[int]
    mean_max_prob: list[float]
    mean_entropy: list[float]
    mean_support_size_st: list[float]
    trials: int
    seed: int


@dataclass(frozen=True)
class SupportBoundReport:
    k_values: list[int]
    p_support_gt_k: list[float]
    p_gap_lt_inv_k: list[float]
    trials: int
    n: int = 0
    seed: int = 0

    def sigma(self, i: int) -> float:
        """Binomial standard error of the support-size estimate at ``k_values[i]``."""
        p = self.p_support_gt_k[i]
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.trials)

    def violations(self, n_sigma: float = 3.0) -> list[int]:
        """k values where P(support > k) exceeds P(gap < 1/k) beyond the margin."""
        bad = []
        for i, k in enumerate(self.k_values):
            p_l, p_r = self.p_support_gt_k[i], self.p_gap_lt_inv_k[i]
            sig = math.sqrt((p_l * (1 - p_l) + p_r * (1 - p_r)) / self.trials)
            if p_l > p_r + n_sigma * sig:
                bad.append(k)
        return bad


def _flatness_sums(x: np.ndarray) -> tuple[float, float, float]:
    p = softmax_rows(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    _, _, support = soft_threshold_rows(x)
    return float(p.max(axis=1).sum()), float(-plogp.sum(axis=1).sum()), float(support.sum())


def flatness_from_samples(x) -> tuple[float, float, float]:
    """Mean max softmax probability, mean entropy (nats) and mean ST support
    size over the rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    a, b, c = _flatness_sums(x)
    t = x.shape[0]
    return a / t, b / t, c / t


def _batched(seed: int, trials: int, n: int, fn, threads: int):
    """Apply ``fn`` to batches of N(0,1) rows and return partials in batch order."""
    starts = list(range(0, trials, _BATCH))

    def work(lo):
        return fn(prng.normal_rows(seed, min(_BATCH, trials - lo), n, first_row=lo))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, starts))
    return [work(lo) for lo in starts]


def flatness_profile(lengths, trials: int = 10000, seed: int = 0, threads: int = 1) -> FlatnessProfile:
    """Softmax and soft-threshold statistics of i.i.d. N(0, 1) score vectors."""
    lengths = [int(n) for n in lengths]
    if not lengths or min(lengths) < 2:
        raise ValueError("lengths must be non-empty and each >= 2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    maxp, ent, sup = [], [], []
    for n in lengths:
        parts = _batched(seed, trials, n, _flatness_sums, threads)
        a, b, c = (math.fsum(col) for col in zip(*parts))
        maxp.append(a / trials)
        ent.append(b / trials)
        sup.append(c / trials)
    return FlatnessProfile(lengths, maxp, ent, sup, trials, seed)


def _bound_counts(x: np.ndarray, k_values) -> tuple[np.ndarray, np.ndarray]:
    _, _, support = soft_threshold_rows(x)
    srt = -np.sort(-x, axis=1)
    gt = np.array([np.count_nonzero(support > k) for k in k_values], dtype=np.int64)
    gap = np.array(
        [np.count_nonzero(srt[:, k - 1] - srt[:, k] < 1.0 / k) for k in k_values], dtype=np.int64
    )
    return gt, gap


def support_bound_from_samples(x, k_values) -> tuple[list[float], list[float]]:
    """Empirical P(support > k) and P(s_(k) - s_(k+1) < 1/k) over rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    k_values = [int(k) for k in k_values]
    if any(not 1 <= k < x.shape[1] for k in k_values):
        raise ValueError("every k must satisfy 1 <= k < n")
    if not k_values:
        return [], []
    gt, gap = _bound_counts(x, k_values)
    t = x.shape[0]
    return (gt / t).tolist(), (gap / t).tolist()


def support_bound_check(n: int, k_values, trials: int = 100000, seed: int = 0, threads: int = 1) -> SupportBoundReport:
    """Estimate both sides of P(support > k) <= P(s_(k) - s_(k+1) < 1/k)."""
    k_values = [int(k) for k in k_values]
    if any(not 1 <= k < n for k in k_values):
        raise ValueError("every k must satisfy 1 <= k < n")
    if trials < 1000:
        raise ValueError("support_bound_check needs at least 1000 trials")
    if not k_values:
        return SupportBoundReport([], [], [], trials, n, seed)
    parts = _batched(seed, trials, n, lambda x: _bound_counts(x, k_values), threads)
    gt = sum(p[0] for p in parts)
    gap = sum(p[1] for p in parts)
    return SupportBoundReport(k_values, (gt / trials).tolist(), (gap / trials).tolist(), trials, n, seed)


def _fmt(x) -> str:
    return str(x) if isinstance(x, (int, np.integer)) else format(float(x), ".17g")


def emit_csv(result: FlatnessProfile | SupportBoundReport, path) -> Path:
    path = Path(path)
    if isinstance(result, FlatnessProfile):
        header = FLATNESS_FIELDS
        cols = (result.sequence_lengths, result.mean_max_prob, result.mean_entropy, result.mean_support_size_st)
    elif isinstance(result, SupportBoundReport):
        header = BOUND_FIELDS
        cols = (result.k_values, result.p_support_gt_k, result.p_gap_lt_inv_k)
    else:
        raise TypeError(f"cannot write {type(result).__name__} as CSV")
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def read_csv(path, trials: int = 0, seed: int = 0) -> FlatnessProfile | SupportBoundReport:
    """Parse a file written by :func:`emit_csv`; the schema is told by its header."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = tuple(rows[0]), rows[1:]
    cols = list(zip(*body)) if body else [()] * len(header)
    if header == FLATNESS_FIELDS:
        return FlatnessProfile(
            [int(v) for v in cols[0]], *([float(v) for v in c] for c in cols[1:]), trials=trials, seed=seed
        )
    if header == BOUND_FIELDS:
        return SupportBoundReport(
            [int(v) for v in cols[0]], *([float(v) for v in c] for c in cols[1:]), trials=trials, seed=seed
        )
    raise ValueError(f"{path}: unrecognised CSV header {header}")
