"""Sliding-window export of audio and text embedding stores."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .encoders import build_encoder
from .stores import KIND_AUDIO, KIND_TEXT, query_key, read_manifest_rows, write_store

log = logging.getLogger("embed_export")


@dataclass
class ExportJob:
    manifest: str | Path
    out_dir: str | Path
    audio_root: str | Path | None = None  # defaults to the manifest's directory
    window_s: float = 1.0
    hop_s: float = 1.0
    model: str = "mel:64"
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.window_s <= 0 or self.hop_s <= 0:
            raise ValueError("window_s and hop_s must be positive")

    @property
    def resolved_audio_root(self) -> Path:
        if self.audio_root is not None:
            return Path(self.audio_root)
        return Path(self.manifest).parent


def read_wav_mono(path: str | Path) -> tuple[int, np.ndarray]:
    sr, data = wavfile.read(str(path))
    x = np.asarray(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64) / float(np.iinfo(data.dtype).max)
    else:
        x = x.astype(np.float64)
    return int(sr), x


def slide_windows(samples: np.ndarray, sample_rate_hz: int, window_s: float, hop_s: float):
    """Full windows only (trailing partial window dropped), ordered by start."""
    win = max(1, round(window_s * sample_rate_hz))
    hop = max(1, round(hop_s * sample_rate_hz))
    n = (samples.shape[0] - win) // hop + 1 if samples.shape[0] >= win else 0
    for i in range(n):
        yield samples[i * hop : i * hop + win]


def export_audio(job: ExportJob) -> tuple[list[Path], list[str]]:
    """One store per manifest item under <out>/audio/<audio_id>.emb.

    Per-item failures are logged and skipped; the list of failures comes
    back so callers can exit nonzero.
    """
    encoder = build_encoder(job.model, job.device)
    rows_meta = read_manifest_rows(job.manifest)
    out_dir = Path(job.out_dir) / "audio"
    written: list[Path] = []
    failed: list[str] = []
    for row in rows_meta:
        audio_id = row["audio_id"]
        try:
            path = job.resolved_audio_root / row["audio_path"]
            sr, samples = read_wav_mono(path)
            vectors = [
                encoder.encode_audio(window, sr)
                for window in slide_windows(samples, sr, job.window_s, job.hop_s)
            ]
            if not vectors:
                raise ValueError(
                    f"audio shorter ({samples.shape[0] / sr:.2f} s) than one "
                    f"window ({job.window_s} s)"
                )
            store_rows = np.stack(vectors)
            written.append(
                write_store(
                    store_rows,
                    out_dir / f"{audio_id}.emb",
                    window_s=job.window_s,
                    hop_s=job.hop_s,
                    kind=KIND_AUDIO,
                    extra={"model": encoder.name},
                )
            )
        except Exception as exc:
            log.error("item %s failed: %s", audio_id, exc)
            failed.append(audio_id)
    return written, failed


def export_text(job: ExportJob, queries: list[str]) -> tuple[list[Path], list[str]]:
    """One single-row store per query under <out>/text/<key>.emb.

    Empty queries are skipped with a warning; duplicates are written once.
    """
    encoder = build_encoder(job.model, job.device)
    out_dir = Path(job.out_dir) / "text"
    written: list[Path] = []
    skipped: list[str] = []
    seen: set[str] = set()
    for query in queries:
        query = query.strip()
        if not query:
            log.warning("skipping empty query")
            skipped.append(query)
            continue
        key = query_key(query)
        if key in seen:
            continue
        seen.add(key)
        vector = encoder.encode_text(query)
        written.append(
            write_store(
                vector[None, :],
                out_dir / f"{key}.emb",
                window_s=0.0,
                hop_s=1.0,
                kind=KIND_TEXT,
                extra={"model": encoder.name, "query": query},
            )
        )
    return written, skipped


def manifest_queries(manifest: str | Path) -> list[str]:
    """All annotation queries in manifest order (deduplicated)."""
    queries: dict[str, None] = {}
    for row in read_manifest_rows(manifest):
        for ann in row.get("annotations", []):
            queries.setdefault(ann["query"])
    return list(queries)
