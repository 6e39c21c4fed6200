"""Pedal voltage binarization and data-driven threshold calibration."""

from __future__ import annotations

import numpy as np

THRESHOLD_GRID_POINTS = 64


def binarize_pedal(voltages: np.ndarray, threshold: float) -> np.ndarray:
    """1 = pressed where voltage >= threshold (boundary counts as pressed)."""
    return (np.asarray(voltages, dtype=float) >= threshold).astype(np.int8)


def _frame_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2.0 * tp / (2 * tp + fp + fn)


def calibrate_pedal_threshold(
    voltages: np.ndarray, truth: np.ndarray, grid: np.ndarray | None = None
) -> tuple[float, float]:
    """Grid search for the voltage threshold maximizing frame-level F1.

    Ties go to the lowest threshold, which favors recall (a lower cut
    never removes a detected press). The default grid is 64 evenly spaced
    points spanning the observed voltage range.
    """
    v = np.asarray(voltages, dtype=float)
    t = np.asarray(truth).astype(np.int8)
    if v.shape != t.shape:
        raise ValueError(f"length mismatch: {v.shape} voltages vs {t.shape} labels")
    if t.min() == t.max():
        raise ValueError("threshold calibration needs both pressed and released truth samples")
    if grid is None:
        grid = np.linspace(v.min(), v.max(), THRESHOLD_GRID_POINTS)
    best_th, best_f1 = None, -1.0
    for th in np.sort(np.asarray(grid, dtype=float)):
        f1 = _frame_f1(binarize_pedal(v, th), t)
        if f1 > best_f1:  # strict: earlier (lower) threshold wins ties
            best_th, best_f1 = float(th), f1
    return best_th, best_f1
