"""Grasper open/close estimation from the distance between the two
finger-mounted tracker sensors of one hand.

Pipeline: Euclidean distance -> centered moving average -> threshold.
State encoding is 1 = closed, 0 = open.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GrasperEstimatorConfig:
    window: int = 15  # samples, 0.5 s at 30 Hz
    threshold_cm: float = 4.0
    closed_value: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.threshold_cm <= 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold_cm}")


def moving_average_centered(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; near the edges the window shrinks to the
    samples that exist so no padding value leaks into the result."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if window <= 1 or n == 0:
        return x.copy()
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + (window - 1 - half), n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi + 1 - lo)


def estimate_grasper_state(
    sensor_a: np.ndarray, sensor_b: np.ndarray, cfg: GrasperEstimatorConfig = GrasperEstimatorConfig()
) -> np.ndarray:
    """Binary closed(1)/open(0) series from two aligned (n,3) position series."""
    a = np.asarray(sensor_a, dtype=float)
    b = np.asarray(sensor_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"expected matching (n,3) series, got {a.shape} and {b.shape}")
    dist = np.linalg.norm(a - b, axis=1)
    filtered = moving_average_centered(dist, cfg.window)
    return (filtered < cfg.threshold_cm).astype(np.int8)
