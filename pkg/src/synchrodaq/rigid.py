"""Rigid (rotation + translation) maps between sensor and robot frames.

Least-squares registration of paired point sets follows the classic
SVD closed form with reflection correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Frame, Pose6Dof, SchemaError
from .rotations import angles_to_matrix, matrix_to_angles

ORTHONORMAL_TOL = 1e-9


class DegenerateGeometryError(ValueError):
    """Point configuration does not determine a rigid transform."""


@dataclass(frozen=True)
class RigidTransform:
    source: Frame
    target: Frame
    rotation: np.ndarray = field(repr=False)
    translation: np.ndarray = field(repr=False)

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        tr = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-6:
            raise SchemaError("rotation is not orthonormal")
        if np.linalg.det(rot) < 0:
            raise SchemaError("rotation has negative determinant (reflection)")

    @classmethod
    def identity(cls, source: Frame, target: Frame) -> "RigidTransform":
        return cls(source, target, np.eye(3), np.zeros(3))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """Map (n,3) or (3,) source-frame positions into the target frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return RigidTransform(
            self.target, self.source, self.rotation.T, -self.rotation.T @ self.translation
        )

    def to_dict(self) -> dict:
        return {
            "source_frame": self.source.value,
            "target_frame": self.target.value,
            "rotation_row_major": [float(v) for v in self.rotation.reshape(-1)],
            "translation_cm": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RigidTransform":
        return cls(
            Frame(doc["source_frame"]),
            Frame(doc["target_frame"]),
            np.array(doc["rotation_row_major"], dtype=float).reshape(3, 3),
            np.array(doc["translation_cm"], dtype=float),
        )


def estimate_rigid(
    src_points: np.ndarray,
    dst_points: np.ndarray,
    source: Frame = Frame.TRACKER,
    target: Frame = Frame.MTM,
) -> RigidTransform:
    """Least-squares rigid registration of paired points (rows of (n,3)).

    Minimizes sum ||R s_i + t - d_i||^2 over proper rotations. Needs at
    least 3 non-collinear correspondences; reflections are corrected by
    flipping the sign of the smallest singular direction.
    """
    src = np.asarray(src_points, dtype=float)
    dst = np.asarray(dst_points, dtype=float)
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != dst.shape:
        raise ValueError(f"expected matching (n,3) arrays, got {src.shape} and {dst.shape}")
    n = src.shape[0]
    if n < 3:
        raise DegenerateGeometryError(f"need at least 3 correspondence pairs, got {n}")

    centroid_src = src.mean(axis=0)
    centroid_dst = dst.mean(axis=0)
    a = src - centroid_src
    b = dst - centroid_dst

    # collinear sources leave a rotation about the line undetermined
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise DegenerateGeometryError("source points are collinear or coincident")

    h = a.T @ b
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = centroid_dst - rot @ centroid_src
    return RigidTransform(source, target, rot, t)


def apply_transform(transform: RigidTransform, pose: Pose6Dof, frame: Frame | None = None) -> Pose6Dof:
    """Map a pose through a rigid transform.

    Position goes through R p + t; orientation through composition of the
    rotation with the pose's own rotation matrix. `frame` (when given)
    must equal the transform's source frame.
    """
    if frame is not None and frame != transform.source:
        raise SchemaError(
            f"pose is in frame {frame.value}, transform maps from {transform.source.value}"
        )
    pos = transform.apply_points(np.array(pose.position))
    rot = transform.rotation @ angles_to_matrix(*pose.orientation)
    return Pose6Dof(position=tuple(pos), orientation=matrix_to_angles(rot))
