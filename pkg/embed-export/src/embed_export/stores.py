"""On-disk embedding store writer plus the manifest/key conventions.

Store files are a raw little-endian float32 row-major payload ``NAME.emb``
with a JSON sidecar ``NAME.emb.json`` holding dim/rows/window_s/hop_s/kind
(and provenance extras such as the model identifier).  Audio stores live
under ``<out>/audio/<audio_id>.emb``, text stores under
``<out>/text/<sha256(query)[:16]>.emb``.  Writes are atomic (temp file +
rename).
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

KIND_AUDIO = "audio-windows"
KIND_TEXT = "text-query"


def query_key(query: str) -> str:
    return hashlib.sha256(query.encode("utf-8")).hexdigest()[:16]


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_store(
    rows: np.ndarray,
    path: str | Path,
    window_s: float,
    hop_s: float,
    kind: str,
    extra: dict | None = None,
) -> Path:
    rows = np.ascontiguousarray(rows, dtype=np.float32)
    if rows.ndim != 2:
        raise ValueError(f"rows must be a 2-D matrix, got shape {rows.shape}")
    path = Path(path)
    if path.suffix != ".emb":
        path = path.with_suffix(".emb")
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, rows.astype("<f4", copy=False).tobytes(order="C"))
    sidecar = {
        "dim": int(rows.shape[1]),
        "rows": int(rows.shape[0]),
        "window_s": float(window_s),
        "hop_s": float(hop_s),
        "kind": kind,
    }
    sidecar.update(extra or {})
    _atomic_write(
        Path(str(path) + ".json"),
        (json.dumps(sidecar, ensure_ascii=False) + "\n").encode("utf-8"),
    )
    return path


def read_manifest_rows(path: str | Path) -> list[dict]:
    """Minimal JSONL manifest reader (audio_id / audio_path / duration_s / annotations)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "audio_id" not in row:
                raise ValueError(f"{path}:{lineno}: manifest row missing 'audio_id'")
            rows.append(row)
    return rows
