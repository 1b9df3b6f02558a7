"""Embedding stores and the deterministic mock embedder.

A store is a matrix of per-window audio embeddings (or a single pooled
text-query embedding) saved as a raw little-endian float32 payload
``NAME.emb`` next to a JSON sidecar ``NAME.emb.json`` carrying
``{"dim", "rows", "window_s", "hop_s", "kind"}`` plus free extra keys.
The mock embedder maps event labels to fixed unit vectors so retrieval can
be exercised end to end without any pretrained model.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import AudioItem, Span

STORE_FORMAT_VERSION = "1"

KIND_AUDIO = "audio-windows"
KIND_TEXT = "text-query"
_KINDS = (KIND_AUDIO, KIND_TEXT)

_SIDECAR_KEYS = ("dim", "rows", "window_s", "hop_s", "kind")


class StoreFormatError(ValueError):
    """Raised when an embedding store file violates the on-disk format."""


@dataclass(eq=False)
class EmbeddingStore:
    """Immutable-by-convention matrix of embeddings with window metadata."""

    dim: int
    rows: np.ndarray  # (n_rows, dim) float32
    window_s: float
    hop_s: float = 1.0
    kind: str = KIND_AUDIO
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        if self.rows.ndim != 2 or self.rows.shape[1] != self.dim:
            raise ValueError(f"rows must be (n, {self.dim}), got shape {self.rows.shape}")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("embedding rows must be finite")
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind == KIND_TEXT and self.rows.shape[0] != 1:
            raise ValueError(f"text-query store must have 1 row, got {self.rows.shape[0]}")
        if not self.hop_s > 0:
            raise ValueError(f"hop_s must be > 0, got {self.hop_s}")

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.window_s == other.window_s
            and self.hop_s == other.hop_s
            and self.kind == other.kind
            and np.array_equal(self.rows, other.rows)
        )


def mean_pool(frames: np.ndarray) -> np.ndarray:
    """Arithmetic mean over the temporal axis of a (T, D) frame matrix."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ValueError(f"expected a non-empty (T, D) matrix, got shape {frames.shape}")
    return frames.mean(axis=0)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine is undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


# --- on-disk store format ---------------------------------------------------


def _store_paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix != ".emb":
        path = path.with_suffix(path.suffix + ".emb") if path.suffix else path.with_suffix(".emb")
    return path, Path(str(path) + ".json")


def write_store(store: EmbeddingStore, path: str | Path) -> Path:
    """Write ``NAME.emb`` (raw little-endian float32, row-major) + JSON sidecar."""
    payload_path, sidecar_path = _store_paths(path)
    payload_path.parent.mkdir(parents=True, exist_ok=True)
    payload_path.write_bytes(store.rows.astype("<f4", copy=False).tobytes(order="C"))
    sidecar = {
        "dim": store.dim,
        "rows": store.n_rows,
        "window_s": store.window_s,
        "hop_s": store.hop_s,
        "kind": store.kind,
    }
    for key, value in store.extra.items():
        sidecar.setdefault(key, value)
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, ensure_ascii=False)
        fh.write("\n")
    return payload_path


def read_store(path: str | Path) -> EmbeddingStore:
    payload_path, sidecar_path = _store_paths(path)
    if not sidecar_path.exists():
        raise StoreFormatError(f"missing sidecar {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    missing = [k for k in _SIDECAR_KEYS if k not in sidecar]
    if missing:
        raise StoreFormatError(f"sidecar {sidecar_path} missing keys {missing}")
    dim = int(sidecar["dim"])
    n_rows = int(sidecar["rows"])
    payload = payload_path.read_bytes()
    expected = n_rows * dim * 4
    if len(payload) != expected:
        raise StoreFormatError(
            f"{payload_path}: expected rows*dim*4 = {n_rows}*{dim}*4 = {expected} bytes, "
            f"found {len(payload)}"
        )
    rows = np.frombuffer(payload, dtype="<f4").reshape(n_rows, dim)
    extra = {k: v for k, v in sidecar.items() if k not in _SIDECAR_KEYS}
    return EmbeddingStore(
        dim=dim,
        rows=rows.copy(),
        window_s=float(sidecar["window_s"]),
        hop_s=float(sidecar["hop_s"]),
        kind=str(sidecar["kind"]),
        extra=extra,
    )


def query_key(query: str) -> str:
    """Stable file-name key for a text query (used to locate its store)."""
    return hashlib.sha256(query.encode("utf-8")).hexdigest()[:16]


def window_count(duration_s: float, window_s: float, hop_s: float) -> int:
    """Number of full sliding windows; the trailing partial window is dropped."""
    if window_s <= 0 or hop_s <= 0:
        raise ValueError("window_s and hop_s must be positive")
    if duration_s < window_s:
        return 0
    return int(math.floor((duration_s - window_s) / hop_s)) + 1


# --- deterministic mock embedder ---------------------------------------------


@dataclass
class MockWorldSpec:
    """Fixture world: per-item labelled event spans plus noise parameters.

    Each label maps to a fixed unit vector; windows embed the normalized sum
    of the labels active at their midpoint (background windows get their own
    pseudo-random unit vector) plus optional Gaussian noise.
    """

    events: dict[str, list[tuple[str, Span]]]
    noise_sigma: float = 0.0
    seed: int = 0
    dim: int = 128

    def __post_init__(self) -> None:
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def known_labels(self) -> set[str]:
        return {label for spans in self.events.values() for label, _ in spans}


def _stable_u64(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def label_vector(world: MockWorldSpec, label: str) -> np.ndarray:
    """The fixed unit vector this label embeds to (noise-free)."""
    rng = np.random.default_rng([world.seed, _stable_u64("label:" + label)])
    v = rng.standard_normal(world.dim)
    return v / np.linalg.norm(v)


def mock_embed_text(world: MockWorldSpec, query: str) -> EmbeddingStore:
    if query not in world.known_labels():
        raise KeyError(f"query {query!r} is not an event label of this mock world")
    row = label_vector(world, query).astype(np.float32)[None, :]
    return EmbeddingStore(dim=world.dim, rows=row, window_s=0.0, hop_s=1.0, kind=KIND_TEXT)


def mock_embed_audio(
    world: MockWorldSpec,
    audio_id: str,
    duration_s: float,
    window_s: float = 1.0,
    hop_s: float = 1.0,
) -> EmbeddingStore:
    events = world.events.get(audio_id, [])
    n = window_count(duration_s, window_s, hop_s)
    rng = np.random.default_rng([world.seed, _stable_u64("item:" + audio_id)])
    rows = np.empty((n, world.dim), dtype=np.float32)
    for i in range(n):
        mid = i * hop_s + window_s / 2.0
        active = [label for label, span in events if span.start_s <= mid < span.end_s]
        if active:
            v = np.zeros(world.dim)
            for label in active:
                v += label_vector(world, label)
            v = v / np.linalg.norm(v)
        else:
            v = rng.standard_normal(world.dim)
            v = v / np.linalg.norm(v)
        if world.noise_sigma > 0:
            v = v + rng.normal(0.0, world.noise_sigma, world.dim)
        rows[i] = v
    return EmbeddingStore(dim=world.dim, rows=rows, window_s=window_s, hop_s=hop_s)


def mock_embed(
    world: MockWorldSpec,
    item: AudioItem,
    window_s: float = 1.0,
    hop_s: float = 1.0,
) -> tuple[EmbeddingStore, dict[str, EmbeddingStore]]:
    """Audio store for the item plus one text store per annotation query."""
    audio = mock_embed_audio(world, item.audio_id, item.duration_s, window_s, hop_s)
    texts = {q: mock_embed_text(world, q) for q in item.queries()}
    return audio, texts
