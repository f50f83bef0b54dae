"""Trajectory error metrics and the unmatched-landmark rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mapping import LandmarkMap, squares_overlap
from .se2 import wrap_angle
from .trajectory import Trajectory


@dataclass(frozen=True)
class TrajectoryErrorReport:
    delta_pos: float  # mean absolute position error, m
    rmse_pos: float
    delta_ang: float  # mean absolute heading error, deg
    rmse_ang: float
    n_samples: int
    times: np.ndarray
    pos_errors: np.ndarray
    ang_errors: np.ndarray  # signed, deg, in (-180, 180]

    def as_dict(self) -> dict:
        return {"delta_pos": self.delta_pos, "rmse_pos": self.rmse_pos,
                "delta_ang": self.delta_ang, "rmse_ang": self.rmse_ang,
                "n_samples": self.n_samples}


def pose_errors(estimate_poses, truth_poses) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean position errors (m) and signed heading errors (deg) of
    matched pose rows."""
    a = np.asarray(estimate_poses, float).reshape(-1, 3)
    b = np.asarray(truth_poses, float).reshape(-1, 3)
    if a.shape != b.shape:
        raise ValueError("pose arrays must have the same shape")
    pos = np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])
    ang = np.degrees(wrap_angle(a[:, 2] - b[:, 2]))
    return pos, ang


def compare_trajectories(estimate: Trajectory, ground_truth: Trajectory,
                         sample_spacing: float = 1.0) -> TrajectoryErrorReport:
    """Errors of ``estimate`` sampled every ``sample_spacing`` metres along
    the ground truth.

    Ground truth is resampled at equal arc-length steps; the estimate is
    interpolated at the matching timestamps. Only samples within both time
    spans count.
    """
    if not sample_spacing > 0:
        raise ValueError(f"sample_spacing must be positive, got {sample_spacing}")
    t0 = max(estimate.times[0], ground_truth.times[0])
    t1 = min(estimate.times[-1], ground_truth.times[-1])
    if not t0 <= t1:
        raise ValueError("trajectories do not overlap in time")
    arc = ground_truth.arc_length()
    s = np.arange(0.0, arc[-1] + 1e-9, sample_spacing)
    times, _ = ground_truth.at_arc_length(s)
    times = times[(times >= t0) & (times <= t1)]
    if len(times) == 0:
        raise ValueError("no ground-truth samples inside the estimate's time span")
    # both sides go through the same time interpolation, so identical
    # trajectories compare exactly equal
    gt = ground_truth.interpolate(times)
    est = estimate.interpolate(times)
    pos, ang = pose_errors(est, gt)
    return TrajectoryErrorReport(
        delta_pos=float(np.mean(pos)), rmse_pos=float(np.sqrt(np.mean(pos ** 2))),
        delta_ang=float(np.mean(np.abs(ang))), rmse_ang=float(np.sqrt(np.mean(ang ** 2))),
        n_samples=int(len(times)), times=times, pos_errors=pos, ang_errors=ang)


def estimate_epsilon(map_a: LandmarkMap, local_maps_b) -> float:
    """Fraction of run-B local landmarks whose ground-plane square overlaps
    no landmark of run A's map."""
    dets = [d for lm in local_maps_b for d in lm.detections]
    if not dets:
        raise ValueError("no local landmarks to match")
    lms = list(map_a)
    if not lms:
        return 1.0
    centers = map_a.centers
    reach = 0.5 * (map_a.widths.max() + max(d.width for d in dets))
    unmatched = 0
    for d in dets:
        near = np.flatnonzero(np.max(np.abs(centers - [d.x, d.y]), axis=1) < reach)
        if not any(squares_overlap(d, lms[i]) for i in near):
            unmatched += 1
    return unmatched / len(dets)
