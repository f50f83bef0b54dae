"""Planar rigid motions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def wrap_angle(phi):
    """Wrap angle(s) to (-pi, pi]."""
    out = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2.0 * np.pi)
    return float(out) if np.ndim(out) == 0 else out


def transform(x: float, y: float, phi: float) -> np.ndarray:
    """3x3 homogeneous matrix of the motion (x, y, phi)."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    @classmethod
    def from_matrix(cls, m) -> "Pose2D":
        m = np.asarray(m, dtype=float)
        return cls(m[0, 2], m[1, 2], np.arctan2(m[1, 0], m[0, 0]))

    @classmethod
    def from_array(cls, v) -> "Pose2D":
        return cls(*np.asarray(v, dtype=float)[:3])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi])

    def matrix(self) -> np.ndarray:
        return transform(self.x, self.y, self.phi)

    def __matmul__(self, other: "Pose2D") -> "Pose2D":
        return Pose2D(*compose(self.as_array(), other.as_array()))

    def inverse(self) -> "Pose2D":
        return Pose2D(*invert(self.as_array()))

    def apply(self, points) -> np.ndarray:
        """Map (..., 2) points from this pose's frame into the parent frame."""
        return apply(self.as_array(), points)


def compose(a, b) -> np.ndarray:
    """a (+) b for (..., 3) pose arrays; b is expressed in a's frame."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    return np.stack([a[..., 0] + c * b[..., 0] - s * b[..., 1],
                     a[..., 1] + s * b[..., 0] + c * b[..., 1],
                     wrap_angle(a[..., 2] + b[..., 2])], axis=-1)


def invert(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    return np.stack([-c * a[..., 0] - s * a[..., 1],
                     s * a[..., 0] - c * a[..., 1],
                     wrap_angle(-a[..., 2])], axis=-1)


def between(a, b) -> np.ndarray:
    """Relative motion from a to b, expressed in a's frame."""
    return compose(invert(a), b)


def apply(pose, points) -> np.ndarray:
    pose = np.asarray(pose, dtype=float)
    p = np.asarray(points, dtype=float)
    c, s = np.cos(pose[2]), np.sin(pose[2])
    return np.stack([pose[0] + c * p[..., 0] - s * p[..., 1],
                     pose[1] + s * p[..., 0] + c * p[..., 1]], axis=-1)


def apply3(pose, points) -> np.ndarray:
    """Like :func:`apply` for (..., 3) points; z passes through."""
    p = np.asarray(points, dtype=float)
    xy = apply(pose, p[..., :2])
    return np.concatenate([xy, p[..., 2:3]], axis=-1)
