"""Encoder backends behind a model-identifier string.

``mel:<n_mels>`` is a fully offline DSP encoder: log-mel frame energies
mean-pooled over time for audio, seeded hashed bag-of-words unit vectors
for text in the same dimensionality.  ``clap:<hf-model-id>`` runs a
pretrained contrastive audio-text model via transformers and is loaded
lazily so the package works without torch installed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_LOG_EPS = 1e-10


@dataclass
class MelEncoder:
    """Deterministic log-mel statistics encoder (no pretrained weights)."""

    n_mels: int = 64
    frame_ms: float = 25.0
    hop_ms: float = 10.0

    @property
    def dim(self) -> int:
        return self.n_mels

    @property
    def name(self) -> str:
        return f"mel:{self.n_mels}"

    def _filterbank(self, sample_rate_hz: int, n_fft: int) -> np.ndarray:
        def hz_to_mel(f):
            return 2595.0 * np.log10(1.0 + f / 700.0)

        def mel_to_hz(m):
            return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

        n_bins = n_fft // 2 + 1
        mel_points = np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), self.n_mels + 2)
        hz_points = mel_to_hz(mel_points)
        bins = np.floor((n_fft + 1) * hz_points / sample_rate_hz).astype(int)
        bins = np.clip(bins, 0, n_bins - 1)
        fb = np.zeros((self.n_mels, n_bins))
        for m in range(1, self.n_mels + 1):
            left, center, right = bins[m - 1], bins[m], bins[m + 1]
            if center == left:
                center = min(left + 1, n_bins - 1)
            if right <= center:
                right = min(center + 1, n_bins - 1)
            for k in range(left, center):
                fb[m - 1, k] = (k - left) / max(center - left, 1)
            for k in range(center, right):
                fb[m - 1, k] = (right - k) / max(right - center, 1)
        return fb

    def encode_audio(self, samples: np.ndarray, sample_rate_hz: int) -> np.ndarray:
        """Log-mel frames mean-pooled over the temporal axis -> (n_mels,)."""
        x = np.asarray(samples, dtype=np.float64)
        if x.size == 0:
            raise ValueError("cannot encode an empty window")
        frame = max(2, round(self.frame_ms / 1000.0 * sample_rate_hz))
        hop = max(1, round(self.hop_ms / 1000.0 * sample_rate_hz))
        if x.size < frame:
            x = np.pad(x, (0, frame - x.size))
        n_frames = (x.size - frame) // hop + 1
        idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
        frames = x[idx] * np.hanning(frame)[None, :]
        power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
        fb = self._filterbank(sample_rate_hz, frame)
        mel = np.log(power @ fb.T + _LOG_EPS)
        return mel.mean(axis=0)

    def encode_text(self, text: str) -> np.ndarray:
        """Mean of seeded unit token vectors, renormalized."""
        tokens = [t for t in "".join(
            c.lower() if c.isalnum() else " " for c in text
        ).split() if t]
        if not tokens:
            raise ValueError("cannot encode an empty query")
        acc = np.zeros(self.n_mels)
        for token in tokens:
            seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")
            v = np.random.default_rng(seed).standard_normal(self.n_mels)
            acc += v / np.linalg.norm(v)
        norm = np.linalg.norm(acc)
        if norm == 0.0:
            raise ValueError(f"query {text!r} hashed to a zero vector")
        return acc / norm


class ClapEncoder:
    """Pretrained contrastive audio-text encoder via transformers (lazy)."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import ClapModel, ClapProcessor
        except ImportError as exc:
            raise RuntimeError(
                "the clap backend needs the optional [clap] extra "
                "(pip install 'embed-export[clap]')"
            ) from exc
        try:
            self._model = ClapModel.from_pretrained(model_id).to(device).eval()
            self._processor = ClapProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise RuntimeError(
                f"cannot load pretrained model {model_id!r}: {exc}. "
                "Weights must be available locally or via a reachable hub."
            ) from exc
        self._torch = torch
        self._device = device
        self.name = f"clap:{model_id}"
        self.dim = int(self._model.config.projection_dim)

    def encode_audio(self, samples: np.ndarray, sample_rate_hz: int) -> np.ndarray:
        inputs = self._processor(
            audios=np.asarray(samples, dtype=np.float32),
            sampling_rate=sample_rate_hz,
            return_tensors="pt",
        ).to(self._device)
        with self._torch.no_grad():
            feats = self._model.get_audio_features(**inputs)
        return feats[0].cpu().numpy().astype(np.float64)

    def encode_text(self, text: str) -> np.ndarray:
        inputs = self._processor(text=[text], return_tensors="pt", padding=True).to(self._device)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats[0].cpu().numpy().astype(np.float64)


def build_encoder(model_id: str, device: str = "cpu"):
    """Resolve a model identifier: 'mel:<n_mels>' or 'clap:<hf-model-id>'."""
    if model_id.startswith("mel"):
        _, _, arg = model_id.partition(":")
        return MelEncoder(n_mels=int(arg) if arg else 64)
    if model_id.startswith("clap:"):
        return ClapEncoder(model_id.split(":", 1)[1], device=device)
    raise ValueError(f"unknown model identifier {model_id!r} (expected mel:* or clap:*)")
