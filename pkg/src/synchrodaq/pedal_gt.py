"""Ground-truth pedal states recovered from on-screen indicator widgets.

Consoles that expose no pedal telemetry still render a per-pedal UI
element that changes color with the pedal state; classifying the mean
color of a small screen region against on/off reference colors recovers
a binary press series from the recorded video frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IndicatorRoi:
    """Pixel rectangle (x, y, width, height) of one pedal's indicator."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("ROI must be at least 1x1 pixels")


def _mean_roi_color(frame: np.ndarray, roi: IndicatorRoi) -> np.ndarray:
    h, w = frame.shape[:2]
    if roi.x < 0 or roi.y < 0 or roi.x + roi.width > w or roi.y + roi.height > h:
        raise ValueError(f"ROI {roi} outside {w}x{h} frame")
    patch = frame[roi.y : roi.y + roi.height, roi.x : roi.x + roi.width]
    return patch.reshape(-1, patch.shape[-1]).mean(axis=0).astype(float)


def extract_pedal_gt_from_frames(
    frames,
    rois: dict[str, IndicatorRoi],
    on_color,
    off_color,
) -> dict[str, np.ndarray]:
    """Binary series per pedal from video frames.

    Each frame's ROI mean color is assigned to the nearer of the on/off
    reference colors (RGB distance). A two-frame hysteresis suppresses
    single-frame flips: the state only switches once the new raw state has
    held for two consecutive frames.
    """
    on = np.asarray(on_color, dtype=float)
    off = np.asarray(off_color, dtype=float)
    if np.array_equal(on, off):
        raise ValueError("on and off reference colors must differ")

    raw = {name: [] for name in rois}
    for frame in frames:
        frame = np.asarray(frame)
        for name, roi in rois.items():
            color = _mean_roi_color(frame, roi)
            d_on = np.linalg.norm(color - on)
            d_off = np.linalg.norm(color - off)
            raw[name].append(1 if d_on < d_off else 0)

    out = {}
    for name, series in raw.items():
        arr = np.asarray(series, dtype=np.int8)
        st = arr.copy()
        for i in range(1, arr.size):
            if arr[i] != st[i - 1] and arr[i] == arr[i - 1]:
                st[i] = arr[i]  # new state confirmed by two consecutive frames
            else:
                st[i] = st[i - 1]
        out[name] = st
    return out
