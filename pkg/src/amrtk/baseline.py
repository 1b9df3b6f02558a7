"""Sliding-window baseline retriever.

Per-window cosine similarity against the query embedding, binarized at a
threshold, cleaned with a majority-vote median filter; maximal runs of
positives become candidate spans whose confidence is the mean similarity
within the run.  The threshold and filter length are tuned by grid search
maximizing average mAP on a validation set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels, metrics
from .core import ScoredSpan, Span
from .embeddings import EmbeddingStore

DEFAULT_TAU_GRID: tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(19))  # 0.00..0.90
DEFAULT_M_GRID: tuple[int, ...] = tuple(range(1, 32, 2))  # 1, 3, ..., 31


@dataclass(frozen=True)
class BaselineConfig:
    threshold: float
    median_len: int = 1
    window_s: float = 1.0
    hop_s: float = 1.0

    def __post_init__(self) -> None:
        if self.median_len <= 0 or self.median_len % 2 == 0:
            raise ValueError(f"median_len must be odd and positive, got {self.median_len}")
        if not self.window_s > 0:
            raise ValueError(f"window_s must be > 0, got {self.window_s}")
        if not self.hop_s > 0:
            raise ValueError(f"hop_s must be > 0, got {self.hop_s}")


def similarity_curve(audio: EmbeddingStore, query: EmbeddingStore) -> np.ndarray:
    """Cosine similarity of every audio window row against the query vector."""
    if audio.dim != query.dim:
        raise ValueError(f"dimension mismatch: audio dim {audio.dim} vs query dim {query.dim}")
    rows = audio.rows.astype(np.float64)
    q = query.rows[0].astype(np.float64)
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("query embedding has zero norm")
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ValueError(f"audio window {bad} has zero-norm embedding")
    return rows @ q / (norms * qn)


def binarize(sims: np.ndarray, threshold: float) -> np.ndarray:
    return (np.asarray(sims, dtype=np.float64) >= threshold).astype(np.uint8)


def median_filter(bits: np.ndarray, m: int) -> np.ndarray:
    """Majority vote over an odd-length window, zero-padded at both ends."""
    return _kernels.median_binary(np.asarray(bits), m)


def extract_moments(
    bits: np.ndarray,
    sims: np.ndarray,
    hop_s: float,
    window_s: float,
    duration_s: float,
) -> list[ScoredSpan]:
    """Maximal runs of positive windows -> spans, confidence = mean similarity.

    A run over window indices i..j covers [i*hop, j*hop + window] clipped to
    the audio duration; candidates come back sorted by confidence
    descending (ties: earlier start).
    """
    bits = np.asarray(bits)
    sims = np.asarray(sims, dtype=np.float64)
    if bits.shape != sims.shape:
        raise ValueError(f"bits and sims length mismatch: {bits.shape} vs {sims.shape}")
    candidates: list[ScoredSpan] = []
    i = 0
    n = len(bits)
    while i < n:
        if not bits[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and bits[j + 1]:
            j += 1
        start = max(0.0, i * hop_s)
        end = max(start, min(j * hop_s + window_s, duration_s))
        confidence = float(np.mean(sims[i : j + 1]))
        candidates.append(ScoredSpan(Span(start, end), confidence))
        i = j + 1
    candidates.sort(key=lambda c: (-c.confidence, c.span.start_s))
    return candidates


def retrieve(
    audio: EmbeddingStore,
    query: EmbeddingStore,
    cfg: BaselineConfig,
    duration_s: float | None = None,
) -> list[ScoredSpan]:
    """similarity curve -> threshold -> median filter -> run extraction."""
    sims = similarity_curve(audio, query)
    bits = median_filter(binarize(sims, cfg.threshold), cfg.median_len)
    if duration_s is None:
        duration_s = (audio.n_rows - 1) * audio.hop_s + audio.window_s if audio.n_rows else 0.0
    return extract_moments(bits, sims, audio.hop_s, audio.window_s, duration_s)


@dataclass
class TuningItem:
    """One validation (audio, query) pair: its similarity curve and ground truth."""

    sims: np.ndarray
    duration_s: float
    ground_truths: list[Span]


def _evaluate_grid_point(
    items: Sequence[TuningItem], tau: float, m: int, window_s: float, hop_s: float
) -> float:
    results = []
    for item in items:
        bits = median_filter(binarize(item.sims, tau), m)
        cands = extract_moments(bits, item.sims, hop_s, window_s, item.duration_s)
        results.append(metrics.QueryResult(item.ground_truths, cands, item.duration_s))
    return metrics.avg_map(results)


def tune(
    items: Sequence[TuningItem],
    tau_grid: Sequence[float] = DEFAULT_TAU_GRID,
    m_grid: Sequence[int] = DEFAULT_M_GRID,
    window_s: float = 1.0,
    hop_s: float = 1.0,
    progress: Callable[[float, int, float], None] | None = None,
) -> BaselineConfig:
    """Grid search maximizing average mAP; ties prefer smaller m, then smaller tau."""
    if not items:
        raise ValueError("cannot tune on an empty validation set")
    if not tau_grid or not m_grid:
        raise ValueError("tau and median grids must be non-empty")
    best_score = -1.0
    best: tuple[int, float] | None = None
    for m in sorted(m_grid):
        for tau in sorted(tau_grid):
            score = _evaluate_grid_point(items, tau, m, window_s, hop_s)
            if progress is not None:
                progress(tau, m, score)
            if score > best_score:
                best_score = score
                best = (m, tau)
    assert best is not None
    return BaselineConfig(threshold=best[1], median_len=best[0], window_s=window_s, hop_s=hop_s)
