"""Conversion between (azimuth, elevation, roll) angles and rotation matrices.

One convention is used everywhere in this package: intrinsic Z-Y-X, i.e.
R = Rz(azimuth) @ Ry(elevation) @ Rx(roll), angles in degrees, azimuth and
roll in [-180, 180], elevation in [-90, 90].
"""

from __future__ import annotations

import numpy as np


def angles_to_matrix(azimuth_deg: float, elevation_deg: float, roll_deg: float) -> np.ndarray:
    """Rotation matrix for intrinsic Z-Y-X angles given in degrees."""
    a, e, r = np.deg2rad([azimuth_deg, elevation_deg, roll_deg])
    ca, sa = np.cos(a), np.sin(a)
    ce, se = np.cos(e), np.sin(e)
    cr, sr = np.cos(r), np.sin(r)
    return np.array(
        [
            [ca * ce, ca * se * sr - sa * cr, ca * se * cr + sa * sr],
            [sa * ce, sa * se * sr + ca * cr, sa * se * cr - ca * sr],
            [-se, ce * sr, ce * cr],
        ]
    )


def matrix_to_angles(rot: np.ndarray) -> tuple[float, float, float]:
    """Inverse of angles_to_matrix; returns (azimuth, elevation, roll) in degrees.

    At the elevation = +/-90 gimbal singularity roll is set to 0 and the
    remaining freedom is absorbed into azimuth.
    """
    rot = np.asarray(rot, dtype=float)
    se = -rot[2, 0]
    se = min(1.0, max(-1.0, se))
    elevation = np.arcsin(se)
    if abs(se) > 1.0 - 1e-12:
        # ce == 0: only azimuth -/+ roll is determined
        azimuth = np.arctan2(-rot[0, 1], rot[1, 1])
        roll = 0.0
    else:
        azimuth = np.arctan2(rot[1, 0], rot[0, 0])
        roll = np.arctan2(rot[2, 1], rot[2, 2])
    return float(np.rad2deg(azimuth)), float(np.rad2deg(elevation)), float(np.rad2deg(roll))


def rotation_angle_between(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle in radians between two rotation matrices.

    Uses atan2 of the skew part against the trace, so tiny angles are
    resolved to machine precision instead of the ~1e-8 floor of the plain
    arccos formula.
    """
    rel = np.asarray(ra) @ np.asarray(rb).T
    skew = rel - rel.T
    s = np.linalg.norm(skew) / (2.0 * np.sqrt(2.0))  # |sin(theta)|
    c = (np.trace(rel) - 1.0) / 2.0  # cos(theta)
    return float(np.arctan2(s, c))


def random_rotation(rng: np.random.Generator, max_angle_deg: float = 180.0) -> np.ndarray:
    """Uniform random axis, uniform angle in [0, max_angle_deg]."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    theta = np.deg2rad(rng.uniform(0.0, max_angle_deg))
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)
