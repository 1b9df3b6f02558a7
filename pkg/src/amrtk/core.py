"""Interval algebra for audio moments.

Spans are absolute (seconds), normalized moments are (center, width)
fractions of the audio duration.  Everything downstream (losses, metrics,
the baseline retriever) is built on the conversions and the 1-D IoU /
generalized-IoU defined here, plus the JSONL dataset manifest model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class Span:
    """Time interval in seconds, end_s >= start_s, both finite.

    Physical audio spans have start_s >= 0; negative coordinates are
    tolerated so the same algebra works on model-space intervals built
    from unclamped predictions.
    """

    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValueError(f"span must be finite, got ({self.start_s}, {self.end_s})")
        if self.end_s < self.start_s:
            raise ValueError(f"span end {self.end_s} < start {self.start_s}")

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class NormalizedMoment:
    """Moment as (center, width), both fractions of the audio duration.

    Valid moments live in 0 <= center <= 1, 0 <= width <= 1 (width 0 only
    as a degenerate intermediate).  Construction requires finite values
    only: raw detector outputs may fall outside the unit box and are
    clamped at conversion time (`to_span`), and loss code needs to accept
    them as-is.
    """

    center: float
    width: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.center) and math.isfinite(self.width)):
            raise ValueError(f"moment must be finite, got ({self.center}, {self.width})")

    @property
    def in_unit_range(self) -> bool:
        return 0.0 <= self.center <= 1.0 and 0.0 <= self.width <= 1.0


@dataclass(frozen=True)
class Candidate:
    """A predicted moment plus its confidence score in [0, 1]."""

    moment: NormalizedMoment
    confidence: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.confidence) and 0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class ScoredSpan:
    """A candidate resolved to absolute seconds: span plus confidence."""

    span: Span
    confidence: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.confidence):
            raise ValueError(f"confidence must be finite, got {self.confidence}")


@dataclass(frozen=True)
class MomentAnnotation:
    """Ground-truth (query, span) pair."""

    query: str
    span: Span

    def __post_init__(self) -> None:
        if not self.query:
            raise ValueError("annotation query must be non-empty")


@dataclass
class AudioItem:
    """One manifest row: an audio file with its moment annotations.

    Annotations are kept sorted by start time; every span must fit inside
    the item duration.
    """

    audio_id: str
    audio_path: str
    duration_s: float
    annotations: list[MomentAnnotation] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.duration_s) and self.duration_s >= 0):
            raise ValueError(f"duration_s must be finite and >= 0, got {self.duration_s}")
        self.annotations = sorted(self.annotations, key=lambda a: a.span.start_s)
        for ann in self.annotations:
            if ann.span.end_s > self.duration_s + 1e-9:
                raise ValueError(
                    f"annotation {ann.query!r} ends at {ann.span.end_s} s, "
                    f"beyond item duration {self.duration_s} s"
                )

    def queries(self) -> list[str]:
        """Unique annotation queries, in first-appearance order."""
        seen: dict[str, None] = {}
        for ann in self.annotations:
            seen.setdefault(ann.query)
        return list(seen)

    def spans_for(self, query: str) -> list[Span]:
        return [a.span for a in self.annotations if a.query == query]


def to_span(m: NormalizedMoment, duration_s: float) -> Span:
    """Convert a normalized (center, width) moment to absolute seconds.

    Endpoints are clamped to [0, duration_s]; a negative width collapses
    to a zero-length span at the (clamped) center.
    """
    if not (math.isfinite(duration_s) and duration_s > 0):
        raise ValueError(f"duration_s must be finite and > 0, got {duration_s}")
    start = (m.center - m.width / 2.0) * duration_s
    end = (m.center + m.width / 2.0) * duration_s
    start = min(max(start, 0.0), duration_s)
    end = min(max(end, 0.0), duration_s)
    if end < start:  # only possible for width < 0
        point = min(max(m.center * duration_s, 0.0), duration_s)
        return Span(point, point)
    return Span(start, end)


def from_span(s: Span, duration_s: float) -> NormalizedMoment:
    """Convert an absolute span to normalized (center, width)."""
    if not (math.isfinite(duration_s) and duration_s > 0):
        raise ValueError(f"duration_s must be finite and > 0, got {duration_s}")
    if s.end_s > duration_s:
        raise ValueError(f"span ends at {s.end_s} s, beyond duration {duration_s} s")
    center = (s.start_s + s.end_s) / (2.0 * duration_s)
    width = (s.end_s - s.start_s) / duration_s
    return NormalizedMoment(center, width)


def iou(a: Span, b: Span) -> float:
    """Intersection over union of two intervals; 0 when the union has zero length."""
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    if inter < 0.0:
        inter = 0.0
    union = a.length_s + b.length_s - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: Span, b: Span) -> float:
    """Generalized IoU for intervals: IoU minus the empty fraction of the hull.

    Equals IoU whenever the spans overlap or touch; ranges over [-1, 1].
    Two identical zero-length spans are a perfect match (1.0 by convention).
    """
    hull = max(a.end_s, b.end_s) - min(a.start_s, b.start_s)
    if hull <= 0.0:
        return 1.0
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    if inter < 0.0:
        inter = 0.0
    union = a.length_s + b.length_s - inter
    iou_val = inter / union if union > 0.0 else 0.0
    gap = hull - union
    if gap < 0.0:  # only float noise: the hull always contains the union
        gap = 0.0
    return iou_val - gap / hull


# --- dataset manifest (JSONL, one AudioItem per line) ---------------------


def item_to_dict(item: AudioItem) -> dict:
    return {
        "audio_id": item.audio_id,
        "audio_path": item.audio_path,
        "duration_s": item.duration_s,
        "annotations": [
            {"query": a.query, "start_s": a.span.start_s, "end_s": a.span.end_s}
            for a in item.annotations
        ],
    }


def item_from_dict(row: dict) -> AudioItem:
    try:
        annotations = [
            MomentAnnotation(a["query"], Span(float(a["start_s"]), float(a["end_s"])))
            for a in row.get("annotations", [])
        ]
        return AudioItem(
            audio_id=str(row["audio_id"]),
            audio_path=str(row.get("audio_path", "")),
            duration_s=float(row["duration_s"]),
            annotations=annotations,
        )
    except KeyError as exc:
        raise ValueError(f"manifest row missing key {exc}") from exc


def write_manifest(items: list[AudioItem], path: str | Path) -> None:
    """Write a JSONL manifest: UTF-8, LF line endings, one item per line."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(json.dumps(item_to_dict(item), ensure_ascii=False))
            fh.write("\n")


def read_manifest(path: str | Path) -> list[AudioItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            items.append(item_from_dict(row))
    return items
