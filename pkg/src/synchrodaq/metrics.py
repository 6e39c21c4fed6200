"""Cross-modal validation metrics: trajectory similarity, binary event
detection quality, temporal overlap, residual lag and pedal usage shares.
"""

from __future__ import annotations

import numpy as np


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the two mean-centered series.

    Centering turns this into a pattern metric: a constant offset or
    positive scale does not change it, which is what makes it usable for
    trajectories with arbitrary frame origins.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"expected equal-length 1-d series, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise ValueError("need at least 2 samples")
    ac = a - a.mean()
    bc = b - b.mean()
    na, nb = np.linalg.norm(ac), np.linalg.norm(bc)
    if na == 0.0 or nb == 0.0:
        raise ValueError("constant series has no direction after centering")
    return float(np.dot(ac, bc) / (na * nb))


def nrmse(pred: np.ndarray, gt: np.ndarray) -> float:
    """RMSE normalized by the ground-truth range, in percent."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    span = gt.max() - gt.min()
    if span == 0.0:
        raise ValueError("ground truth is constant; range normalization undefined")
    return float(100.0 * np.sqrt(np.mean((pred - gt) ** 2)) / span)


def detection_metrics(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, float]:
    """Frame-level (precision, recall, f1); undefined ratios report as 0."""
    pred = np.asarray(pred).astype(np.int8)
    gt = np.asarray(gt).astype(np.int8)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    tp = int(np.sum((pred == 1) & (gt == 1)))
    fp = int(np.sum((pred == 1) & (gt == 0)))
    fn = int(np.sum((pred == 0) & (gt == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _merge_intervals(intervals) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for start, end in sorted((float(s), float(e)) for s, e in intervals):
        if end <= start:
            raise ValueError(f"malformed interval ({start}, {end}): end must exceed start")
        if out and start <= out[-1][1]:
            out[-1][1] = max(out[-1][1], end)
        else:
            out.append([start, end])
    return [(s, e) for s, e in out]


def temporal_iou(pred_intervals, gt_intervals) -> float:
    """Intersection-over-union of total active time; 1.0 when both empty."""
    pred = _merge_intervals(pred_intervals)
    gt = _merge_intervals(gt_intervals)
    if not pred and not gt:
        return 1.0
    inter = 0.0
    i = j = 0
    while i < len(pred) and j < len(gt):
        lo = max(pred[i][0], gt[j][0])
        hi = min(pred[i][1], gt[j][1])
        if hi > lo:
            inter += hi - lo
        if pred[i][1] < gt[j][1]:
            i += 1
        else:
            j += 1
    total = sum(e - s for s, e in pred) + sum(e - s for s, e in gt)
    union = total - inter
    return inter / union if union > 0 else 1.0


def series_to_intervals(states: np.ndarray, times: np.ndarray | None = None) -> list[tuple[float, float]]:
    """Active intervals [on, off) of a binary series; times default to the
    frame index so one frame contributes one unit of duration."""
    s = np.asarray(states).astype(np.int8)
    if times is None:
        times = np.arange(s.size + 1, dtype=float)
    else:
        times = np.asarray(times, dtype=float)
        step = np.diff(times).mean() if times.size > 1 else 1.0
        times = np.append(times, times[-1] + step if times.size else 0.0)
    out = []
    start = None
    for i, v in enumerate(s):
        if v and start is None:
            start = times[i]
        elif not v and start is not None:
            out.append((start, times[i]))
            start = None
    if start is not None:
        out.append((start, times[s.size]))
    return out


def frame_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Frame-count IoU of the active sets; 1.0 when both are empty."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    union = int(np.sum(pred | gt))
    if union == 0:
        return 1.0
    return float(np.sum(pred & gt) / union)


def estimate_lag(pred: np.ndarray, gt: np.ndarray, rate_hz: float, max_shift: int) -> float:
    """Residual lag in milliseconds between two binary series.

    Scans integer shifts k in [-max_shift, max_shift] and picks the one
    maximizing frame agreement of pred advanced by k against gt. Positive
    lag means the prediction trails the ground truth. Ties prefer the
    smallest |k|, then the positive shift.
    """
    pred = np.asarray(pred).astype(np.int8)
    gt = np.asarray(gt).astype(np.int8)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    n = pred.size
    if max_shift >= n / 2:
        raise ValueError(f"max_shift {max_shift} too large for {n} frames")
    if pred.max(initial=0) == 0 and gt.max(initial=0) == 0:
        raise ValueError("lag is undefined when neither series has a positive frame")

    best_k, best_score = 0, -1.0
    for k in sorted(range(-max_shift, max_shift + 1), key=lambda k: (abs(k), -k)):
        if k >= 0:
            a, b = pred[k:], gt[: n - k]
        else:
            a, b = pred[: n + k], gt[-k:]
        score = float(np.mean(a == b))
        if score > best_score:
            best_k, best_score = k, score
    return 1000.0 * best_k / rate_hz


def grasper_agreement(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, float]:
    """(IoU over closed frames, accuracy over all frames, precision of
    closed predictions)."""
    pred = np.asarray(pred).astype(np.int8)
    gt = np.asarray(gt).astype(np.int8)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    iou = frame_iou(pred == 1, gt == 1)
    accuracy = float(np.mean(pred == gt)) if pred.size else 1.0
    closed = int(np.sum(pred == 1))
    precision = float(np.sum((pred == 1) & (gt == 1)) / closed) if closed else 0.0
    return iou, accuracy, precision


def pedal_usage(
    states_by_channel: dict[int, np.ndarray],
    mapping: dict[int, str],
    subset: list[int] | None = None,
) -> dict[int, float]:
    """Per-pedal share of pressed frames, in percent, normalized within the
    requested channel subset (e.g. only the energy pedals, or all)."""
    channels = sorted(states_by_channel) if subset is None else list(subset)
    if not channels:
        raise ValueError("usage subset must name at least one channel")
    for ch in channels:
        if ch not in mapping:
            raise ValueError(f"channel {ch} is not in the pedal mapping")
        if ch not in states_by_channel:
            raise ValueError(f"no state series for channel {ch}")
    pressed = {ch: int(np.sum(np.asarray(states_by_channel[ch]) == 1)) for ch in channels}
    total = sum(pressed.values())
    if total == 0:
        return {ch: 0.0 for ch in channels}
    return {ch: 100.0 * pressed[ch] / total for ch in channels}


def unwrap_degrees(series: np.ndarray) -> np.ndarray:
    """Remove +/-180 deg jumps so angle series are comparable."""
    return np.rad2deg(np.unwrap(np.deg2rad(np.asarray(series, dtype=float))))
