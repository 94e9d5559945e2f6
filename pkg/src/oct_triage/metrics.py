"""ROC analysis and operating-point statistics.

AUROC is computed from the rank-sum statistic in O(n log n), with tied
scores contributing one half. The ROC curve built here has a trapezoidal
area identical to that statistic, which the test suite asserts against a
brute-force pairwise oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import SingleClass


class ROCPoint(NamedTuple):
    fpr: float
    tpr: float
    threshold: float


@dataclass(frozen=True)
class ROCCurve:
    """Monotone list of (fpr, tpr, threshold) points from (0,0) to (1,1)."""

    points: tuple[ROCPoint, ...]
    auroc: float


@dataclass(frozen=True)
class ConfusionStats:
    """Rates at one threshold; undefined ratios are None, never coerced to 0."""

    accuracy: float
    sensitivity: Optional[float]
    specificity: Optional[float]
    tp: int
    tn: int
    fp: int
    fn: int


def _as_score_label_arrays(scores: Sequence[float], labels: Sequence[bool]):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.ndim != 1 or y.shape != s.shape:
        raise ValueError("scores and labels must be 1-D sequences of equal length")
    return s, y


def _require_both_classes(y: np.ndarray) -> tuple[int, int]:
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(
            f"need at least one positive and one negative (got {n_pos} pos, {n_neg} neg)"
        )
    return n_pos, n_neg


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean rank of their group."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    # start indices of tie groups, plus the end sentinel
    bounds = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1], True])
    ranks = np.empty(values.size, dtype=np.float64)
    for start, stop in zip(bounds[:-1], bounds[1:]):
        ranks[order[start:stop]] = 0.5 * (start + stop - 1) + 1.0
    return ranks


def auroc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability that a random positive outranks a random negative.

    Ties count one half. Raises SingleClass unless both classes are present.
    """
    s, y = _as_score_label_arrays(scores, labels)
    n_pos, n_neg = _require_both_classes(y)
    ranks = _average_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores: Sequence[float], labels: Sequence[bool]) -> ROCCurve:
    """ROC curve over descending distinct score thresholds plus a sentinel.

    A prediction is positive iff score >= threshold, so the curve starts at
    (0, 0) for the +inf sentinel and ends at (1, 1) at the minimum score.
    """
    s, y = _as_score_label_arrays(scores, labels)
    n_pos, n_neg = _require_both_classes(y)

    order = np.argsort(-s, kind="stable")
    s_desc = s[order]
    y_desc = y[order]
    cum_tp = np.cumsum(y_desc)
    cum_fp = np.cumsum(~y_desc)
    # last position of each distinct score along the descending order
    last = np.flatnonzero(np.r_[s_desc[1:] != s_desc[:-1], True])

    points = [ROCPoint(0.0, 0.0, float("inf"))]
    for i in last:
        points.append(
            ROCPoint(
                fpr=float(cum_fp[i] / n_neg),
                tpr=float(cum_tp[i] / n_pos),
                threshold=float(s_desc[i]),
            )
        )

    area = 0.0
    for a, b in zip(points[:-1], points[1:]):
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0
    return ROCCurve(points=tuple(points), auroc=float(area))


def confusion_at_threshold(
    scores: Sequence[float], labels: Sequence[bool], threshold: float
) -> ConfusionStats:
    """Accuracy/sensitivity/specificity with prediction positive iff score >= t."""
    s, y = _as_score_label_arrays(scores, labels)
    if s.size == 0:
        raise ValueError("confusion_at_threshold needs at least one item")
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    tn = int(np.sum(~pred & ~y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    n_pos = tp + fn
    n_neg = tn + fp
    return ConfusionStats(
        accuracy=float((tp + tn) / s.size),
        sensitivity=None if n_pos == 0 else float(tp / n_pos),
        specificity=None if n_neg == 0 else float(tn / n_neg),
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
    )
