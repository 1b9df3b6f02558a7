"""Retrieval and detection metrics.

R1@theta scores the single highest-confidence candidate per query; mAP@theta
uses detection-style greedy matching down the ranked candidate list, each
ground truth matched at most once; average mAP means mAP@theta over the ten
thresholds 0.50, 0.55, ..., 0.95.  A frame-level micro-averaged
precision/recall/F1 is provided for sound-event-detection style evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import ScoredSpan, Span, iou

IOU_THETA_GRID: tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


@dataclass
class QueryResult:
    """Ground truths and scored candidates for one (audio, query) pair."""

    ground_truths: list[Span]
    candidates: list[ScoredSpan]
    duration_s: float = 0.0


@dataclass
class MetricReport:
    """R1 and mAP percentages at selected thresholds, plus average mAP."""

    r1_at: dict[float, float] = field(default_factory=dict)
    map_at: dict[float, float] = field(default_factory=dict)
    avg_map: float = 0.0

    def to_dict(self) -> dict:
        return {
            "r1": {f"{t:.2f}": v for t, v in sorted(self.r1_at.items())},
            "map": {f"{t:.2f}": v for t, v in sorted(self.map_at.items())},
            "avg_map": self.avg_map,
        }


def _ranked(candidates: Sequence[ScoredSpan]) -> list[ScoredSpan]:
    # confidence descending; ties by earlier start, then input order
    order = sorted(
        range(len(candidates)),
        key=lambda i: (-candidates[i].confidence, candidates[i].span.start_s, i),
    )
    return [candidates[i] for i in order]


def recall1_at(results: Sequence[QueryResult], theta: float) -> float:
    """Percent of queries whose top-1 candidate reaches IoU >= theta with any GT.

    Queries with no candidates count as misses.
    """
    if not results:
        raise ValueError("cannot compute R1 over zero queries")
    hits = 0
    for r in results:
        if not r.ground_truths:
            raise ValueError("query result has no ground truths")
        if not r.candidates:
            continue
        top = _ranked(r.candidates)[0]
        if max(iou(top.span, g) for g in r.ground_truths) >= theta:
            hits += 1
    return 100.0 * hits / len(results)


def average_precision(result: QueryResult, theta: float) -> float:
    """AP in [0, 1] with greedy one-to-one matching down the ranked list.

    A candidate is a true positive when its best IoU against a
    still-unmatched ground truth reaches theta; that ground truth (lowest
    index on IoU ties) is then consumed.
    """
    n_gt = len(result.ground_truths)
    if n_gt == 0:
        raise ValueError("average precision needs at least one ground truth")
    if not result.candidates:
        return 0.0
    matched = [False] * n_gt
    tp = 0
    precision_sum = 0.0
    for rank, cand in enumerate(_ranked(result.candidates), start=1):
        best_iou = -1.0
        best_idx = -1
        for idx, gt in enumerate(result.ground_truths):
            if matched[idx]:
                continue
            value = iou(cand.span, gt)
            if value > best_iou:
                best_iou = value
                best_idx = idx
        if best_idx >= 0 and best_iou >= theta:
            matched[best_idx] = True
            tp += 1
            precision_sum += tp / rank
    return precision_sum / n_gt


def map_at(results: Sequence[QueryResult], theta: float) -> float:
    """Mean AP over queries, as a percentage."""
    if not results:
        raise ValueError("cannot compute mAP over zero queries")
    return 100.0 * sum(average_precision(r, theta) for r in results) / len(results)


def avg_map(results: Sequence[QueryResult], grid: Sequence[float] = IOU_THETA_GRID) -> float:
    """Mean of mAP@theta over the threshold grid (default 0.50..0.95, step 0.05)."""
    return sum(map_at(results, t) for t in grid) / len(grid)


def full_report(
    results: Sequence[QueryResult],
    r1_thetas: Sequence[float] = (0.5, 0.7),
    map_thetas: Sequence[float] = (0.5, 0.75),
) -> MetricReport:
    return MetricReport(
        r1_at={t: recall1_at(results, t) for t in r1_thetas},
        map_at={t: map_at(results, t) for t in map_thetas},
        avg_map=avg_map(results),
    )


# --- frame-level SED metrics ------------------------------------------------


@dataclass(frozen=True)
class SedCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "SedCounts") -> "SedCounts":
        return SedCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class SedMetrics:
    precision: float
    recall: float
    f1: float


def _frame_mask(spans: Iterable[Span], n_frames: int, frame_s: float) -> list[bool]:
    mask = [False] * n_frames
    for span in spans:
        for i in range(n_frames):
            mid = (i + 0.5) * frame_s
            if span.start_s <= mid < span.end_s:
                mask[i] = True
    return mask


def sed_frame_counts(
    pred_by_class: Mapping[str, Sequence[Span]],
    gt_by_class: Mapping[str, Sequence[Span]],
    duration_s: float,
    frame_s: float = 1.0,
) -> SedCounts:
    """Pooled TP/FP/FN over frames x classes; a frame is positive when some
    span covers its midpoint."""
    if frame_s <= 0:
        raise ValueError(f"frame_s must be positive, got {frame_s}")
    n_frames = max(0, math.ceil(duration_s / frame_s))
    tp = fp = fn = 0
    for label in sorted(set(pred_by_class) | set(gt_by_class)):
        pred = _frame_mask(pred_by_class.get(label, ()), n_frames, frame_s)
        gt = _frame_mask(gt_by_class.get(label, ()), n_frames, frame_s)
        for p, g in zip(pred, gt):
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
    return SedCounts(tp, fp, fn)


def sed_metrics_from_counts(counts: SedCounts) -> SedMetrics:
    """Micro precision/recall/F1 percentages; undefined ratios fall to 0."""
    precision = 100.0 * counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = 100.0 * counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return SedMetrics(precision, recall, f1)


def sed_frame_metrics(
    pred_by_class: Mapping[str, Sequence[Span]],
    gt_by_class: Mapping[str, Sequence[Span]],
    duration_s: float,
    frame_s: float = 1.0,
) -> SedMetrics:
    return sed_metrics_from_counts(
        sed_frame_counts(pred_by_class, gt_by_class, duration_s, frame_s)
    )
