"""Time-stamped planar trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .se2 import wrap_angle


@dataclass
class Trajectory:
    """Poses ``(x, y, phi)`` at strictly increasing ``times``."""

    times: np.ndarray
    poses: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        if len(self.times) != len(self.poses):
            raise ValueError("times and poses differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def xy(self) -> np.ndarray:
        return self.poses[:, :2]

    def arc_length(self) -> np.ndarray:
        """Cumulative path length at every pose."""
        steps = np.hypot(*np.diff(self.xy, axis=0).T) if len(self) > 1 else np.zeros(0)
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def length(self) -> float:
        return float(self.arc_length()[-1]) if len(self) else 0.0

    def interpolate(self, t) -> np.ndarray:
        """Poses at times ``t`` (linear in position, shortest arc in heading)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ValueError("interpolation time outside the trajectory span")
        return _interp_poses(t, self.times, self.poses)

    def at_arc_length(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Times and poses at cumulative path lengths ``s``."""
        arc = self.arc_length()
        s = np.asarray(s, dtype=float)
        # stationary stretches repeat arc values; keep the first of each
        keep = np.concatenate([[True], np.diff(arc) > 0])
        return (np.interp(s, arc[keep], self.times[keep]),
                _interp_poses(s, arc[keep], self.poses[keep]))

    def slice_time(self, t0: float, t1: float) -> "Trajectory":
        m = (self.times >= t0) & (self.times <= t1)
        return Trajectory(self.times[m], self.poses[m])


def _interp_poses(q, knots, poses):
    x = np.interp(q, knots, poses[:, 0])
    y = np.interp(q, knots, poses[:, 1])
    i = np.clip(np.searchsorted(knots, q, side="right") - 1, 0, len(knots) - 1)
    j = np.minimum(i + 1, len(knots) - 1)
    span = knots[j] - knots[i]
    frac = np.where(span > 0, (q - knots[i]) / np.where(span > 0, span, 1.0), 0.0)
    dphi = wrap_angle(poses[j, 2] - poses[i, 2])
    phi = wrap_angle(poses[i, 2] + frac * dphi)
    return np.stack([x, y, phi], axis=-1)
