"""Simulated moment-annotated long audio.

Long items are built by overlaying trimmed, gain-calibrated foreground
clips onto background segments at exponentially distributed intervals;
each placement records its caption as the query and its span as the
ground-truth moment.  Mixing is purely additive (no limiter), audio is
written as 32-bit float mono WAV, and every item is reproducible from
(seed, item index) alone.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import _kernels
from .core import AudioItem, MomentAnnotation, Span, write_manifest

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SimulationConfig:
    beta_s: float = 30.0  # mean gap between moments
    fg_gain_db_range: tuple[float, float] = (-5.0, 5.0)
    bg_target_db: float = -20.0
    bg_gain_jitter_db: tuple[float, float] = (-5.0, 5.0)
    trim_threshold_db: float = 20.0  # frames this far below overall power are silent
    trim_frame_ms: float = 50.0
    segment_len_s: float = 60.0
    segment_hop_s: float = 1.0
    sample_rate_hz: int = 16000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beta_s < 0:
            raise ValueError(f"beta_s must be >= 0, got {self.beta_s}")
        if self.trim_threshold_db <= 0:
            raise ValueError(f"trim_threshold_db must be > 0, got {self.trim_threshold_db}")
        if self.segment_hop_s <= 0:
            raise ValueError(f"segment_hop_s must be > 0, got {self.segment_hop_s}")
        if self.segment_len_s <= 0:
            raise ValueError(f"segment_len_s must be > 0, got {self.segment_len_s}")
        if self.trim_frame_ms <= 0:
            raise ValueError(f"trim_frame_ms must be > 0, got {self.trim_frame_ms}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        for name in ("fg_gain_db_range", "bg_gain_jitter_db"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} must be a finite (lo, hi) pair, got {(lo, hi)}")


@dataclass
class ForegroundClip:
    """A foreground source: mono samples or a WAV path, plus its captions."""

    audio: np.ndarray | str | Path
    captions: list[str]

    def __post_init__(self) -> None:
        if not self.captions:
            raise ValueError("foreground clip needs at least one caption")


@dataclass
class ForegroundPool:
    entries: list[ForegroundClip]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("foreground pool must be non-empty")

    def load(self, index: int, sample_rate_hz: int) -> np.ndarray:
        entry = self.entries[index]
        if isinstance(entry.audio, np.ndarray):
            return np.asarray(entry.audio, dtype=np.float64)
        sr, x = read_wav(entry.audio)
        if sr != sample_rate_hz:
            raise ValueError(
                f"{entry.audio}: sample rate {sr} Hz differs from configured "
                f"{sample_rate_hz} Hz (resampling is out of scope)"
            )
        return x


@dataclass(frozen=True)
class BackgroundSegment:
    source_index: int
    start_sample: int


@dataclass
class BackgroundPool:
    """Fixed-length windows over background sources, stored as references.

    Sources may be in-memory arrays or WAV memmaps in their native dtype;
    segments are materialized (mono float64, scaled) only when drawn.
    """

    sources: list[np.ndarray]
    segments: list[BackgroundSegment]
    segment_len_samples: int
    scales: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.scales:
            self.scales = [1.0] * len(self.sources)
        if len(self.scales) != len(self.sources):
            raise ValueError("scales and sources must align")

    def __len__(self) -> int:
        return len(self.segments)

    def load(self, index: int) -> np.ndarray:
        seg = self.segments[index]
        src = self.sources[seg.source_index]
        s = seg.start_sample
        window = np.asarray(src[s : s + self.segment_len_samples], dtype=np.float64)
        if window.ndim == 2:
            window = window.mean(axis=1)
        return window * self.scales[seg.source_index]


# --- audio helpers ---------------------------------------------------------


def read_wav(path: str | Path, mmap: bool = False) -> tuple[int, np.ndarray]:
    """Read a WAV file as mono float64 in [-1, 1] (float payloads pass through)."""
    sr, data = wavfile.read(str(path), mmap=mmap)
    x = np.asarray(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64) / float(np.iinfo(data.dtype).max)
    else:
        x = x.astype(np.float64)
    return int(sr), x


def write_wav_float32(path: str | Path, sample_rate_hz: int, x: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), sample_rate_hz, np.asarray(x, dtype=np.float32))


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(x * x)))


def item_seed(seed: int, index: int) -> int:
    """Splitmix-style mix of (seed, index): independent, reproducible out of order."""
    z = (seed + 0x9E3779B97F4A7C15 * (index + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


# --- core operations ---------------------------------------------------------


def trim_silence(x: np.ndarray, cfg: SimulationConfig) -> Span:
    """Kept region after stripping quiet onsets/offsets.

    Frames of trim_frame_ms are scanned inward from each end and dropped
    while their RMS sits more than trim_threshold_db below the clip's
    overall RMS; interior frames are never touched.  If everything is
    below threshold the full clip is returned unchanged.
    """
    i0, i1 = _trim_bounds(x, cfg)
    sr = cfg.sample_rate_hz
    return Span(i0 / sr, i1 / sr)


def _trim_bounds(x: np.ndarray, cfg: SimulationConfig) -> tuple[int, int]:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot trim an empty clip")
    n = x.size
    overall = rms(x)
    if overall == 0.0:
        return 0, n
    frame = max(1, round(cfg.trim_frame_ms / 1000.0 * cfg.sample_rate_hz))
    floor = overall * 10.0 ** (-cfg.trim_threshold_db / 20.0)

    lead = _kernels.frame_rms(x, frame)
    cut_lead = 0
    for value in lead:
        if value < floor:
            cut_lead += frame
        else:
            break
    tail = _kernels.frame_rms(np.ascontiguousarray(x[::-1]), frame)
    cut_tail = 0
    for value in tail:
        if value < floor:
            cut_tail += frame
        else:
            break
    if cut_lead + cut_tail >= n:
        return 0, n
    return cut_lead, n - cut_tail


def sample_interval(rng: np.random.Generator, beta_s: float) -> float:
    """Exponential gap with mean beta_s, via inverse CDF on one uniform draw."""
    if beta_s < 0:
        raise ValueError(f"beta_s must be >= 0, got {beta_s}")
    u = rng.random()
    return -beta_s * math.log1p(-u)


def apply_gain_to_power(x: np.ndarray, target_db: float) -> np.ndarray:
    """Scale so the RMS sits at target_db relative to unit RMS (the 0 dB reference)."""
    x = np.asarray(x, dtype=np.float64)
    r = rms(x)
    if r == 0.0:
        warnings.warn("apply_gain_to_power: all-zero input left unchanged")
        return x.copy()
    return x * (10.0 ** (target_db / 20.0) / r)


@dataclass(frozen=True)
class Placement:
    clip_index: int
    caption: str
    gain_db: float
    start_sample: int
    end_sample: int


@dataclass(frozen=True)
class SampleDetails:
    bg_gain_db: float
    placements: tuple[Placement, ...]


def generate_sample_with_details(
    bg: np.ndarray,
    pool: ForegroundPool,
    cfg: SimulationConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[MomentAnnotation], SampleDetails]:
    """Overlay loop over one background segment, reporting the drawn gains.

    Draw order per item: background jitter, then per placement the gap d,
    clip index (without replacement within the item, so each query yields a
    single moment), caption index, and foreground gain.  The loop stops at
    the first placement that would run past the end of the background.
    """
    sr = cfg.sample_rate_hz
    bg = np.asarray(bg, dtype=np.float64)
    bg_gain_db = cfg.bg_target_db + rng.uniform(*cfg.bg_gain_jitter_db)
    mix = apply_gain_to_power(bg, bg_gain_db)

    annotations: list[MomentAnnotation] = []
    placements: list[Placement] = []
    available = list(range(len(pool.entries)))
    t = 0.0
    while available:
        d = sample_interval(rng, cfg.beta_s)
        pick = int(rng.integers(len(available)))
        clip_index = available.pop(pick)
        entry = pool.entries[clip_index]
        caption = entry.captions[int(rng.integers(len(entry.captions)))]

        clip = pool.load(clip_index, sr)
        k0, k1 = _trim_bounds(clip, cfg)
        seg = clip[k0:k1]

        start_sample = round((t + d) * sr)
        end_sample = start_sample + seg.size
        if end_sample > mix.size:
            break
        gain_db = rng.uniform(*cfg.fg_gain_db_range)
        mix[start_sample:end_sample] += apply_gain_to_power(seg, gain_db)
        annotations.append(MomentAnnotation(caption, Span(start_sample / sr, end_sample / sr)))
        placements.append(Placement(clip_index, caption, gain_db, start_sample, end_sample))
        t = end_sample / sr
    return mix, annotations, SampleDetails(bg_gain_db, tuple(placements))


def generate_sample(
    bg: np.ndarray,
    pool: ForegroundPool,
    cfg: SimulationConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[MomentAnnotation]]:
    mix, annotations, _ = generate_sample_with_details(bg, pool, cfg, rng)
    return mix, annotations


def segment_background(audio: np.ndarray, cfg: SimulationConfig) -> BackgroundPool:
    """All segment_len_s windows at segment_hop_s over one background source."""
    audio = np.asarray(audio)
    n_samples = audio.shape[0]  # rows for stereo sources
    seg_len = max(1, round(cfg.segment_len_s * cfg.sample_rate_hz))
    hop = max(1, round(cfg.segment_hop_s * cfg.sample_rate_hz))
    if n_samples < seg_len:
        warnings.warn(
            f"background audio ({n_samples / cfg.sample_rate_hz:.1f} s) is shorter than "
            f"one segment ({cfg.segment_len_s} s); empty pool"
        )
        return BackgroundPool(sources=[audio], segments=[], segment_len_samples=seg_len)
    n = (n_samples - seg_len) // hop + 1
    segments = [BackgroundSegment(0, i * hop) for i in range(n)]
    return BackgroundPool(sources=[audio], segments=segments, segment_len_samples=seg_len)


def merge_background_pools(pools: list[BackgroundPool]) -> BackgroundPool:
    if not pools:
        raise ValueError("no background pools to merge")
    seg_len = pools[0].segment_len_samples
    sources: list[np.ndarray] = []
    scales: list[float] = []
    segments: list[BackgroundSegment] = []
    for pool in pools:
        if pool.segment_len_samples != seg_len:
            raise ValueError("background pools have mismatched segment lengths")
        offset = len(sources)
        sources.extend(pool.sources)
        scales.extend(pool.scales)
        segments.extend(
            BackgroundSegment(s.source_index + offset, s.start_sample) for s in pool.segments
        )
    return BackgroundPool(
        sources=sources, segments=segments, segment_len_samples=seg_len, scales=scales
    )


def generate_item(
    index: int,
    fg: ForegroundPool,
    bg: BackgroundPool,
    cfg: SimulationConfig,
    prefix: str = "sim-",
) -> tuple[AudioItem, np.ndarray]:
    """One fully seeded item: background drawn and mixed, manifest row built."""
    if len(bg) == 0:
        raise ValueError("background pool is empty")
    rng = np.random.default_rng(item_seed(cfg.seed, index))
    bg_audio = bg.load(int(rng.integers(len(bg))))
    mix, annotations = generate_sample(bg_audio, fg, cfg, rng)
    audio_id = f"{prefix}{index:06d}"
    item = AudioItem(
        audio_id=audio_id,
        audio_path=f"audio/{audio_id}.wav",
        duration_s=mix.size / cfg.sample_rate_hz,
        annotations=annotations,
    )
    return item, mix


def generate_dataset(
    fg: ForegroundPool,
    bg: BackgroundPool,
    n_items: int,
    cfg: SimulationConfig,
    out_dir: str | Path | None = None,
    prefix: str = "sim-",
) -> list[AudioItem]:
    """n_items independent items; writes WAVs + manifest.jsonl when out_dir is set."""
    out_path = Path(out_dir) if out_dir is not None else None
    items: list[AudioItem] = []
    for i in range(n_items):
        try:
            item, mix = generate_item(i, fg, bg, cfg, prefix)
            if out_path is not None:
                write_wav_float32(out_path / item.audio_path, cfg.sample_rate_hz, mix)
        except OSError as exc:
            raise OSError(f"item {i}: {exc}") from exc
        items.append(item)
        if i and i % 500 == 0:
            log.info("generated %d/%d items", i, n_items)
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        write_manifest(items, out_path / "manifest.jsonl")
    return items


# --- pool loading from disk ---------------------------------------------------


def load_foreground_pool(
    audio_dir: str | Path, captions_csv: str | Path
) -> ForegroundPool:
    """Pool from a directory of WAVs plus a captions CSV.

    The CSV needs a ``file_name`` column and one or more ``caption*``
    columns (the usual published five-caption schema); rows whose audio
    file is missing are skipped with a warning.
    """
    import csv

    audio_dir = Path(audio_dir)
    entries: list[ForegroundClip] = []
    with open(captions_csv, "r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "file_name" not in reader.fieldnames:
            raise ValueError(f"{captions_csv}: expected a 'file_name' column")
        caption_cols = sorted(c for c in reader.fieldnames if c.startswith("caption"))
        if not caption_cols:
            raise ValueError(f"{captions_csv}: expected caption_* columns")
        for row in reader:
            path = audio_dir / row["file_name"]
            if not path.exists():
                log.warning("skipping %s: audio file not found", row["file_name"])
                continue
            captions = [row[c].strip() for c in caption_cols if row.get(c, "").strip()]
            if not captions:
                log.warning("skipping %s: no captions", row["file_name"])
                continue
            entries.append(ForegroundClip(audio=path, captions=captions))
    return ForegroundPool(entries)


def load_background_pool(audio_dir: str | Path, cfg: SimulationConfig) -> BackgroundPool:
    """Segment every WAV under audio_dir into one merged background pool.

    Sources stay memmapped in their native dtype; only drawn segments are
    materialized.
    """
    audio_dir = Path(audio_dir)
    pools = []
    for path in sorted(audio_dir.glob("*.wav")):
        sr, data = wavfile.read(str(path), mmap=True)
        if sr != cfg.sample_rate_hz:
            raise ValueError(
                f"{path}: sample rate {sr} Hz differs from configured "
                f"{cfg.sample_rate_hz} Hz (resampling is out of scope)"
            )
        scale = 1.0
        if np.issubdtype(data.dtype, np.integer):
            scale = 1.0 / float(np.iinfo(data.dtype).max)
        pool = segment_background(data, cfg)
        pool.scales = [scale] * len(pool.sources)
        pools.append(pool)
    if not pools:
        raise ValueError(f"no .wav files under {audio_dir}")
    return merge_background_pools(pools)
