"""Automated similarity-threshold selection.

Two complementary views of a 1-D score distribution:

* exact two-cluster k-means (the optimum in 1-D is always a contiguous
  split of the sorted values, so it is found by enumerating splits with
  prefix sums -- no Lloyd iteration, no initialization ambiguity);
* knee detection on the descending-sorted score curve, which marks the
  rank past which adding more terms stops paying off.

The knee, when one exists, takes precedence; the two-means boundary is
the fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class ThresholdError(ValueError):
    """Unusable score distribution for the requested operation."""


class ThresholdSource(str, Enum):
    KNEE = "knee"
    TWO_MEANS = "two_means_boundary"
    MANUAL = "manual"


@dataclass(frozen=True)
class Partition2M:
    """Optimal 2-cluster split: ``relevant`` is the upper cluster."""

    boundary: float
    relevant_centroid: float
    other_centroid: float
    relevant_count: int
    sse: float


@dataclass(frozen=True)
class KneeResult:
    """Detected knee of a descending score curve, if any."""

    knee_rank: int | None
    knee_score: float | None
    sensitivity: float

    @property
    def found(self) -> bool:
        return self.knee_rank is not None


@dataclass(frozen=True)
class ThresholdDecision:
    threshold: float
    source: ThresholdSource
    partition: Partition2M
    knee: KneeResult


def two_means(scores: list[float] | np.ndarray) -> Partition2M:
    """Exact optimum of 2-means in one dimension.

    SSE ties break toward the larger relevant (upper) cluster. When every
    value is equal there is nothing to partition: the whole set is relevant
    and the boundary sits at that value.
    """
    x = np.asarray(scores, dtype=np.float64)
    if x.size == 0:
        raise ThresholdError("two_means of an empty score list")
    if not np.all(np.isfinite(x)):
        raise ThresholdError("two_means requires finite scores")
    x = np.sort(x)
    n = int(x.size)
    if x[0] == x[-1]:
        value = float(x[0])
        return Partition2M(
            boundary=value,
            relevant_centroid=value,
            other_centroid=value,
            relevant_count=n,
            sse=0.0,
        )

    prefix = np.concatenate(([0.0], np.cumsum(x)))
    prefix_sq = np.concatenate(([0.0], np.cumsum(x * x)))

    def sse_range(i: int, j: int) -> float:
        # within-cluster sum of squares for x[i:j]
        s, s2, m = prefix[j] - prefix[i], prefix_sq[j] - prefix_sq[i], j - i
        return float(s2 - s * s / m)

    best_k = 1
    best_sse = math.inf
    for k in range(1, n):  # lower cluster x[:k], upper x[k:]
        sse = sse_range(0, k) + sse_range(k, n)
        # strict '<' keeps the smallest k on ties: the larger upper cluster
        if sse < best_sse:
            best_sse, best_k = sse, k

    # Polish so that the upper cluster is exactly {s >= boundary} even when
    # rounding noise lands a value on the midpoint: reassign-to-nearest from
    # the enumerated optimum (never increases the SSE).
    k = best_k
    for _ in range(8):
        lower_mean = float(prefix[k] / k)
        upper_mean = float((prefix[n] - prefix[k]) / (n - k))
        boundary = (lower_mean + upper_mean) / 2.0
        k_next = int(np.searchsorted(x, boundary, side="left"))
        k_next = min(max(k_next, 1), n - 1)
        if k_next == k:
            break
        k = k_next

    return Partition2M(
        boundary=boundary,
        relevant_centroid=upper_mean,
        other_centroid=lower_mean,
        relevant_count=n - k,
        sse=max(0.0, sse_range(0, k) + sse_range(k, n)),
    )


def kneedle(sorted_desc: list[float] | np.ndarray, sensitivity: float = 1.0) -> KneeResult:
    """Knee of a descending curve via the difference-curve construction.

    Ranks are normalized to x' in [0, 1] and scores min-max normalized to
    y' in [0, 1]; the difference curve d = y' - (1 - x') measures elevation
    above the straight descending chord. Knee candidates are the local
    maxima of d, confirmed when d later falls below the candidate's value
    minus ``sensitivity * mean(dx')`` before any higher peak appears.
    """
    if sensitivity <= 0:
        raise ThresholdError(f"sensitivity must be positive, got {sensitivity}")
    y = np.asarray(sorted_desc, dtype=np.float64)
    n = int(y.size)
    if n < 3:
        raise ThresholdError(f"kneedle needs at least 3 points, got {n}")
    if np.any(np.diff(y) > 0):
        raise ThresholdError("kneedle input must be sorted descending")
    lo, hi = float(y[-1]), float(y[0])
    if hi == lo:
        return KneeResult(knee_rank=None, knee_score=None, sensitivity=sensitivity)

    x_norm = np.arange(n, dtype=np.float64) / (n - 1)
    y_norm = (y - lo) / (hi - lo)
    d = y_norm - (1.0 - x_norm)

    candidates = [
        i for i in range(1, n - 1) if d[i] > d[i - 1] and d[i] >= d[i + 1]
    ]
    step = sensitivity / (n - 1)  # mean consecutive x' gap is uniform
    for c in candidates:
        threshold = d[c] - step
        for j in range(c + 1, n):
            if d[j] > d[c]:
                break  # a higher peak supersedes this candidate
            if d[j] < threshold:
                return KneeResult(
                    knee_rank=c, knee_score=float(y[c]), sensitivity=sensitivity
                )
    return KneeResult(knee_rank=None, knee_score=None, sensitivity=sensitivity)


def auto_threshold(
    scores: list[float] | np.ndarray,
    sensitivity: float = 1.0,
    knee_scope: str = "full",
) -> ThresholdDecision:
    """Data-driven threshold: the knee score when a knee exists, otherwise
    the two-means boundary.

    ``knee_scope`` may restrict knee detection to the relevant two-means
    cluster ("relevant") instead of the full distribution ("full").
    """
    x = np.asarray(scores, dtype=np.float64)
    if x.size == 0:
        raise ThresholdError("auto_threshold of an empty score list")
    if knee_scope not in ("full", "relevant"):
        raise ThresholdError(f"unknown knee_scope {knee_scope!r}")

    partition = two_means(x)
    knee_input = np.sort(x)[::-1]
    if knee_scope == "relevant":
        knee_input = knee_input[: partition.relevant_count]

    if knee_input.size >= 3 and knee_input[0] != knee_input[-1]:
        knee = kneedle(knee_input, sensitivity)
    else:
        knee = KneeResult(knee_rank=None, knee_score=None, sensitivity=sensitivity)

    if knee.found:
        return ThresholdDecision(
            threshold=float(knee.knee_score),
            source=ThresholdSource.KNEE,
            partition=partition,
            knee=knee,
        )
    return ThresholdDecision(
        threshold=partition.boundary,
        source=ThresholdSource.TWO_MEANS,
        partition=partition,
        knee=knee,
    )


def pearson(x: list[float] | np.ndarray, y: list[float] | np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ThresholdError(f"length mismatch: {xa.shape} vs {ya.shape}")
    if xa.size < 2:
        raise ThresholdError("pearson needs at least 2 points")
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    sx = float(np.sqrt(np.dot(xd, xd)))
    sy = float(np.sqrt(np.dot(yd, yd)))
    if sx == 0.0 or sy == 0.0:
        raise ThresholdError("pearson undefined for zero-variance input")
    r = float(np.dot(xd, yd) / (sx * sy))
    return min(1.0, max(-1.0, r))
