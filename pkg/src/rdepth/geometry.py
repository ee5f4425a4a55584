"""Pose parameterization: XYZ intrinsic Euler angles + translation.

Poses are camera-to-world rigid transforms.  A pose vector is 6 numbers,
(rx, ry, rz, tx, ty, tz), angles in radians, translation in scene units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def euler_to_matrix(r) -> np.ndarray:
    """3x3 rotation from XYZ intrinsic Euler angles; always orthonormal, det +1."""
    rx, ry, rz = float(r[0]), float(r[1]), float(r[2])
    ca, sa = np.cos(rx), np.sin(rx)
    cb, sb = np.cos(ry), np.sin(ry)
    cc, sc = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    my = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    mz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return mx @ my @ mz


def matrix_to_euler(m: np.ndarray) -> np.ndarray:
    """Inverse of euler_to_matrix for |ry| < pi/2 (small-motion regime)."""
    ry = np.arcsin(np.clip(m[0, 2], -1.0, 1.0))
    rx = np.arctan2(-m[1, 2], m[2, 2])
    rz = np.arctan2(-m[0, 1], m[0, 0])
    return np.array([rx, ry, rz])


def rotation_angle(m: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in radians."""
    return float(np.arccos(np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)))


@dataclass
class PoseVector:
    """Camera-to-world pose: X_world = R(r) @ X_cam + t."""

    r: np.ndarray
    t: np.ndarray

    @classmethod
    def identity(cls) -> "PoseVector":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_array(cls, a) -> "PoseVector":
        a = np.asarray(a, dtype=np.float64)
        return cls(a[:3].copy(), a[3:6].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.r, self.t]).astype(np.float64)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = euler_to_matrix(self.r)
        m[:3, 3] = self.t
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "PoseVector":
        return cls(matrix_to_euler(m[:3, :3]), m[:3, 3].copy())

    def compose(self, other: "PoseVector") -> "PoseVector":
        """self then other in self's local frame: T_self @ T_other."""
        return PoseVector.from_matrix(self.matrix() @ other.matrix())

    def inverse(self) -> "PoseVector":
        rot = euler_to_matrix(self.r)
        return PoseVector(matrix_to_euler(rot.T), -rot.T @ self.t)


def relative_pose(base: PoseVector, target: PoseVector) -> PoseVector:
    """Pose of `target` expressed in `base`'s camera frame."""
    return base.inverse().compose(target)
