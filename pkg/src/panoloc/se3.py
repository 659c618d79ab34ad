"""Rigid transforms with a 6-vector local parametrization.

A PoseSE3 maps world points into the camera frame: X_cam = R @ X + t.
Local updates delta = (omega, nu) compose on the left in the camera frame,

    X_cam' = exp([omega]x) @ (R @ X + t) + nu,

an exponential-map-style chart around the current pose.  Rotations are
re-orthonormalized after every update to stay on the manifold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def hat(w: np.ndarray) -> np.ndarray:
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy],
                     [wz, 0.0, -wx],
                     [-wy, wx, 0.0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula with a Taylor fallback near zero rotation."""
    theta = np.linalg.norm(w)
    S = hat(w)
    if theta < 1e-8:
        return np.eye(3) + S + 0.5 * (S @ S)
    return (np.eye(3) + (np.sin(theta) / theta) * S
            + ((1.0 - np.cos(theta)) / theta ** 2) * (S @ S))


def so3_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    cos_theta = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-8:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) * 0.5
    if np.pi - theta < 1e-6:
        # antisymmetric part degenerates near pi; use R = cos*I + (1-cos)*aa^T + sin*[a]x
        k = int(np.argmax(np.diag(R)))
        a = np.empty(3)
        a[k] = np.sqrt(max((R[k, k] - cos_theta) / (1.0 - cos_theta), 0.0))
        for j in range(3):
            if j != k:
                a[j] = (R[k, j] + R[j, k]) / (2.0 * (1.0 - cos_theta) * a[k])
        return theta * a / np.linalg.norm(a)
    return (theta / (2.0 * np.sin(theta))) * np.array(
        [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (Frobenius) via SVD, det forced to +1."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class PoseSE3:
    """World-to-camera rigid transform."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls()

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply to one point (3,) or a stack (N, 3)."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def inverse(self) -> "PoseSE3":
        return PoseSE3(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """self after other: (self * other)(X) = self(other(X))."""
        return PoseSE3(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def update(self, delta: np.ndarray) -> "PoseSE3":
        """Left-compose a 6-vector (omega, nu) increment in the camera frame."""
        omega, nu = np.asarray(delta[:3]), np.asarray(delta[3:])
        dR = so3_exp(omega)
        return PoseSE3(orthonormalize(dR @ self.rotation), dR @ self.translation + nu)

    def center(self) -> np.ndarray:
        """Camera center in the world frame."""
        return -self.rotation.T @ self.translation


def rotation_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle between two rotations, radians."""
    return float(np.linalg.norm(so3_log(Ra.T @ Rb)))
