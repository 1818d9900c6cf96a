"""Central-difference check of the analytic Jacobian-vector product."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from hspa import prng
from hspa.simplex_ops import jacobian_dense, jvp, soft_threshold_exact

DEFAULT_STEP = 1e-6
TIE_GUARD = 1e-4
REL_TOL = 1e-5
ABS_FLOOR = 1e-8
DENSE_TOL = 1e-12


class TieGuardError(ValueError):
    """The point sits too close to a support boundary for differencing."""


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    num_points: int
    num_skipped_ties: int
    max_dense_error: float = 0.0

    @property
    def passed(self) -> bool:
        return (
            self.num_points > self.num_skipped_ties
            and self.max_rel_error <= REL_TOL
            and self.max_dense_error <= DENSE_TOL
        )

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"gradcheck {status} points={self.num_points} skipped_ties={self.num_skipped_ties} "
            f"max_rel_error={self.max_rel_error:.17g} max_abs_error={self.max_abs_error:.17g} "
            f"max_dense_error={self.max_dense_error:.17g}"
        )


def tie_distance(s) -> float:
    """Distance from the threshold to the nearest entry on either side of it."""
    res = soft_threshold_exact(s)
    gap = np.abs(np.asarray(s, dtype=np.float64) - res.threshold)
    return float(gap.min())


def finite_difference_jvp(s, r, step: float = DEFAULT_STEP, guard: float = TIE_GUARD) -> np.ndarray:
    """``(ST(s + step*r) - ST(s - step*r)) / (2*step)``.

    Raises :class:`TieGuardError` when an entry of ``s`` lies within
    ``max(guard, 10*step)`` of the threshold, where the map has a kink.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if r.shape != s.shape:
        raise ValueError(f"direction shape {r.shape} does not match {s.shape}")
    radius = max(guard, 10.0 * step)
    if tie_distance(s) <= radius:
        raise TieGuardError(f"entry within {radius:g} of the threshold")
    hi = soft_threshold_exact(s + step * r).weights
    lo = soft_threshold_exact(s - step * r).weights
    return (hi - lo) / (2.0 * step)


def check_points(
    points: Iterable[tuple[np.ndarray, np.ndarray]],
    step: float = DEFAULT_STEP,
    guard: float = TIE_GUARD,
) -> GradCheckReport:
    """Compare analytic and differenced JVPs over ``(s, r)`` pairs."""
    max_rel = max_abs = max_dense = 0.0
    total = skipped = 0
    for s, r in points:
        total += 1
        try:
            fd = finite_difference_jvp(s, r, step, guard)
        except TieGuardError:
            skipped += 1
            continue
        ctx = soft_threshold_exact(s).jacobian_context()
        an = jvp(ctx, r)
        err = float(np.max(np.abs(fd - an)))
        max_abs = max(max_abs, err)
        max_rel = max(max_rel, err / max(float(np.max(np.abs(an))), ABS_FLOOR))
        dense = jacobian_dense(ctx) @ r
        max_dense = max(max_dense, float(np.max(np.abs(dense - an))))
    if total == 0:
        raise ValueError("no points to check")
    return GradCheckReport(max_rel, max_abs, total, skipped, max_dense)


def run_gradcheck(
    trials: int,
    n: int,
    seed: int,
    step: float = DEFAULT_STEP,
    guard: float = TIE_GUARD,
) -> GradCheckReport:
    """Random-point check: trial ``t`` draws ``s`` then ``r`` (both N(0, 1))
    from PRNG stream ``t`` of ``seed``."""
    if trials < 1 or n < 2:
        raise ValueError("need trials >= 1 and n >= 2")
    draws = prng.normal_rows(seed, trials, 2 * n)
    return check_points(((row[:n], row[n:]) for row in draws), step, guard)
