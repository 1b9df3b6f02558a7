"""Hot numeric kernels, numba-jitted with pure-numpy fallbacks.

The jitted path is active when numba imports cleanly and the environment
variable ``AMRTK_NO_NUMBA`` is unset (any of 1/true/yes/on disables it).
Both implementations stay importable so the equivalence tests and
``benchmarks/bench_kernels.py`` can compare them in one process.
"""

from __future__ import annotations

import os

import numpy as np

ENV_FLAG = "AMRTK_NO_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


# --- pure-python kernel bodies (numba jit targets) ------------------------


def _frame_rms_py(x, frame_len):
    n = x.shape[0] // frame_len
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        base = i * frame_len
        for j in range(frame_len):
            v = x[base + j]
            acc += v * v
        out[i] = np.sqrt(acc / frame_len)
    return out


def _median_binary_py(bits, m):
    n = bits.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    half = m // 2
    acc = 0
    # running sum over the zero-padded window [i - half, i + half]
    for j in range(min(half + 1, n)):
        acc += bits[j]
    for i in range(n):
        if acc > half:
            out[i] = 1
        lead = i + half + 1
        if lead < n:
            acc += bits[lead]
        trail = i - half
        if trail >= 0:
            acc -= bits[trail]
    return out


def _matching_cost_py(pred_cw, conf, gt_cw, lam_l1, lam_giou):
    n_gt = gt_cw.shape[0]
    n_pred = pred_cw.shape[0]
    out = np.empty((n_gt, n_pred), dtype=np.float64)
    for n in range(n_gt):
        gc = gt_cw[n, 0]
        gw = gt_cw[n, 1]
        g1 = gc - gw / 2.0
        g2 = gc + gw / 2.0
        for k in range(n_pred):
            pc = pred_cw[k, 0]
            pw = pred_cw[k, 1]
            l1 = abs(pc - gc) + abs(pw - gw)
            half = pw / 2.0 if pw > 0.0 else 0.0
            p1 = pc - half
            p2 = pc + half
            hull = max(p2, g2) - min(p1, g1)
            if hull <= 0.0:
                gi = 1.0
            else:
                inter = min(p2, g2) - max(p1, g1)
                if inter < 0.0:
                    inter = 0.0
                union = (p2 - p1) + (g2 - g1) - inter
                iou_val = inter / union if union > 0.0 else 0.0
                gap = hull - union
                if gap < 0.0:  # float noise: the hull always contains the union
                    gap = 0.0
                gi = iou_val - gap / hull
            out[n, k] = -conf[k] + lam_l1 * l1 + lam_giou * (-gi)
    return out


# --- pure-numpy fallbacks --------------------------------------------------


def _frame_rms_np(x, frame_len):
    n = x.shape[0] // frame_len
    if n == 0:
        return np.empty(0, dtype=np.float64)
    frames = np.asarray(x[: n * frame_len], dtype=np.float64).reshape(n, frame_len)
    return np.sqrt(np.mean(frames * frames, axis=1))


def _median_binary_np(bits, m):
    n = bits.shape[0]
    half = m // 2
    full = np.convolve(bits.astype(np.int64), np.ones(m, dtype=np.int64), mode="full")
    # center slice == zero-padded window sums, valid even when m > n
    return (full[half : half + n] > half).astype(np.uint8)


def _matching_cost_np(pred_cw, conf, gt_cw, lam_l1, lam_giou):
    pc = pred_cw[:, 0][None, :]
    pw = pred_cw[:, 1][None, :]
    gc = gt_cw[:, 0][:, None]
    gw = gt_cw[:, 1][:, None]
    l1 = np.abs(pc - gc) + np.abs(pw - gw)
    half = np.maximum(pw, 0.0) / 2.0
    p1, p2 = pc - half, pc + half
    g1, g2 = gc - gw / 2.0, gc + gw / 2.0
    hull = np.maximum(p2, g2) - np.minimum(p1, g1)
    inter = np.clip(np.minimum(p2, g2) - np.maximum(p1, g1), 0.0, None)
    union = (p2 - p1) + (g2 - g1) - inter
    gap = np.clip(hull - union, 0.0, None)  # hull always contains the union
    with np.errstate(divide="ignore", invalid="ignore"):
        iou_val = np.where(union > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)
        gi = np.where(hull > 0.0, iou_val - gap / np.where(hull > 0.0, hull, 1.0), 1.0)
    return -conf[None, :] + lam_l1 * l1 + lam_giou * (-gi)


# --- backend selection ------------------------------------------------------

NUMBA_ENABLED = False
if not _numba_disabled():
    try:
        from numba import njit

        _frame_rms_jit = njit(cache=True)(_frame_rms_py)
        _median_binary_jit = njit(cache=True)(_median_binary_py)
        _matching_cost_jit = njit(cache=True)(_matching_cost_py)
        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    _frame_rms_impl = _frame_rms_jit
    _median_binary_impl = _median_binary_jit
    _matching_cost_impl = _matching_cost_jit
else:
    _frame_rms_impl = _frame_rms_np
    _median_binary_impl = _median_binary_np
    _matching_cost_impl = _matching_cost_np


def backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def frame_rms(x: np.ndarray, frame_len: int) -> np.ndarray:
    """RMS of consecutive non-overlapping frames from the start of ``x``."""
    if frame_len <= 0:
        raise ValueError(f"frame_len must be positive, got {frame_len}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _frame_rms_impl(x, frame_len)


def median_binary(bits: np.ndarray, m: int) -> np.ndarray:
    """Majority vote over a zero-padded window of odd length ``m``."""
    if m <= 0 or m % 2 == 0:
        raise ValueError(f"median length must be odd and positive, got {m}")
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return bits.copy()
    return _median_binary_impl(bits, m)


def matching_cost(
    pred_cw: np.ndarray,
    conf: np.ndarray,
    gt_cw: np.ndarray,
    lam_l1: float,
    lam_giou: float,
) -> np.ndarray:
    """Pairwise DETR-style matching cost, shape (n_gt, n_pred).

    Entry (n, k) is -confidence_k + lam_l1 * L1(pred_k, gt_n)
    + lam_giou * (-gIoU(pred_k, gt_n)) in (center, width) coordinates;
    a negative prediction width is treated as a point at its center.
    """
    pred_cw = np.ascontiguousarray(pred_cw, dtype=np.float64)
    gt_cw = np.ascontiguousarray(gt_cw, dtype=np.float64)
    conf = np.ascontiguousarray(conf, dtype=np.float64)
    return _matching_cost_impl(pred_cw, conf, gt_cw, float(lam_l1), float(lam_giou))
