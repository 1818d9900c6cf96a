"""Latency harness for the weighting operators.

Timings are wall-clock, single-threaded, machine-dependent.  Every rep draws
a fresh N(0, 1) input from PRNG stream ``rep`` of the seed; the checksum
folds every output into one number so the work cannot be skipped, and is a
pure function of ``(op, n, k, reps, seed)``.
"""

from __future__ import annotations

import csv
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hspa import prng
from hspa.simplex_ops import DEFAULT_TOPK, jvp, soft_threshold_exact, soft_threshold_topk, softmax

OPS = ("exact", "topk", "softmax", "jvp")
CSV_FIELDS = ("op", "n", "k", "reps", "p50_ns", "p90_ns", "checksum")
WARMUP = 3


@dataclass(frozen=True)
class BenchRecord:
    op_name: str
    n: int
    k: int | None
    reps: int
    p50_ns: int
    p90_ns: int
    checksum: float


def machine_label() -> str:
    return f"{platform.node()} {platform.machine()} {platform.python_implementation()} {platform.python_version()} numpy {np.__version__}"


def _inputs(seed: int, n: int, rep: int):
    draw = prng.normal(prng.stream_key(seed, rep), 2 * n)
    return draw[:n], draw[n:]


def _prepare(op: str, s: np.ndarray, r: np.ndarray, k: int):
    """Zero-argument callable for one timed call, returning its output."""
    if op == "exact":
        return lambda: soft_threshold_exact(s).weights
    if op == "topk":
        return lambda: soft_threshold_topk(s, k).weights
    if op == "softmax":
        return lambda: softmax(s)
    if op == "jvp":
        ctx = soft_threshold_topk(s, k).jacobian_context()
        return lambda: jvp(ctx, r)
    raise ValueError(f"unknown op {op!r}; expected one of {OPS}")


def _fold(out: np.ndarray) -> float:
    return float(np.dot(out, np.arange(1, out.size + 1, dtype=np.float64)))


def reference_checksum(op: str, n: int, k: int, reps: int, seed: int) -> float:
    """Checksum of the plain API over the inputs the benchmark would use."""
    total = 0.0
    for rep in range(reps):
        s, r = _inputs(seed, n, rep)
        total += _fold(_prepare(op, s, r, k)())
    return total


def bench_one(op: str, n: int, k: int, reps: int, seed: int) -> BenchRecord:
    if n < 2 or reps < 1:
        raise ValueError("need n >= 2 and reps >= 1")
    s, r = _inputs(seed, n, 0)
    warm = _prepare(op, s, r, k)
    for _ in range(WARMUP):
        warm()
    times = np.empty(reps, dtype=np.int64)
    total = 0.0
    for rep in range(reps):
        s, r = _inputs(seed, n, rep)
        call = _prepare(op, s, r, k)
        t0 = time.perf_counter_ns()
        out = call()
        times[rep] = time.perf_counter_ns() - t0
        total += _fold(out)
    p50, p90 = np.percentile(times, [50, 90], method="lower")
    uses_k = op in ("topk", "jvp")
    return BenchRecord(op, n, k if uses_k else None, reps, int(p50), int(p90), total)


def run_bench(ops=OPS, lengths=(1024, 16384, 65536), k: int = DEFAULT_TOPK, reps: int = 50, seed: int = 0):
    return [bench_one(op, int(n), k, reps, seed) for n in lengths for op in ops]


def emit_csv(records, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for rec in records:
            w.writerow([
                rec.op_name, rec.n, "" if rec.k is None else rec.k, rec.reps,
                rec.p50_ns, rec.p90_ns, format(rec.checksum, ".17g"),
            ])
    return path
