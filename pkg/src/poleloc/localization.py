"""Monte Carlo localization against a pole landmark map."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .grid import GridGeometry
from .mapping import LandmarkMap, LocalMapResult, build_local_map, sliding_window_filter
from .poles import DetectorParams
from .scans import Scan
from .se2 import Pose2D, apply, compose, invert, wrap_angle
from .trajectory import Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OdometryIncrement:
    """Body-frame motion ``chi = (dx, dy, dphi)`` with covariance ``sigma``."""

    chi: np.ndarray
    sigma: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=float).reshape(3)
        sigma = np.asarray(self.sigma, dtype=float).reshape(3, 3)
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12):
            raise ValueError("odometry covariance must be symmetric")
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class MeasurementParams:
    sigma: float = 1.0
    epsilon: float = 0.1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")


class ParticleSet:
    """N pose hypotheses (rows x, y, phi) with weights and their own rng."""

    def __init__(self, poses, weights=None, rng=None):
        self.poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        n = len(self.poses)
        if n == 0:
            raise ValueError("particle set must not be empty")
        self.weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float).copy()
        self.rng = rng if rng is not None else make_rng(0)

    def __len__(self) -> int:
        return len(self.poses)

    def normalized(self) -> np.ndarray:
        total = self.weights.sum()
        if not total > 0:
            raise ValueError("particle weights sum to zero")
        return self.weights / total

    def normalize(self) -> "ParticleSet":
        self.weights = self.normalized()
        return self


def make_rng(seed) -> np.random.Generator:
    # counter-based bit generator: streams are reproducible from the seed alone
    return np.random.Generator(np.random.Philox(seed))


def initialize(center: Pose2D, radius: float, heading_range: float, n: int, rng) -> ParticleSet:
    """Positions uniform over a disc, headings uniform in +-heading_range."""
    if n < 1:
        raise ValueError("need at least one particle")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    r = radius * np.sqrt(rng.random(n))
    theta = rng.uniform(-np.pi, np.pi, n)
    phi = center.phi + rng.uniform(-heading_range, heading_range, n)
    poses = np.column_stack([center.x + r * np.cos(theta), center.y + r * np.sin(theta),
                             wrap_angle(phi)])
    return ParticleSet(poses, rng=rng)


def _sqrt_psd(cov):
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-12 * max(1.0, abs(vals).max()):
        raise ValueError("odometry covariance is not positive semidefinite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_increments(odo: OdometryIncrement, inflation: float, n: int, rng) -> np.ndarray:
    """Draws from N(chi, inflation * sigma)."""
    if inflation < 0:
        raise ValueError("inflation must be non-negative")
    root = _sqrt_psd(inflation * odo.sigma)
    return odo.chi + rng.standard_normal((n, 3)) @ root.T


def motion_update(ps: ParticleSet, odo: OdometryIncrement, inflation: float = 1.0,
                  composition: str = "right") -> ParticleSet:
    """Move every particle by its own noisy copy of the odometry increment.

    ``composition="right"`` treats increments as body-frame motion
    (X_t = X_{t-1} T(xi)); ``"left"`` applies them in the map frame
    (X_t = T(xi) X_{t-1}).
    """
    xi = sample_increments(odo, inflation, len(ps), ps.rng)
    if composition == "right":
        ps.poses = compose(ps.poses, xi)
    elif composition == "left":
        ps.poses = compose(xi, ps.poses)
    else:
        raise ValueError(f"unknown composition {composition!r}")
    return ps


def landmark_log_likelihood(poses, online_xy, landmark_map: LandmarkMap,
                            params: MeasurementParams) -> np.ndarray:
    """Per-pose log of prod_k [N(|X l_k - nearest|; 0, sigma) + eps]."""
    online_xy = np.asarray(online_xy, dtype=float).reshape(-1, 2)
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    if len(online_xy) == 0:
        return np.zeros(len(poses))
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    gx = poses[:, 0, None] + c[:, None] * online_xy[:, 0] - s[:, None] * online_xy[:, 1]
    gy = poses[:, 1, None] + s[:, None] * online_xy[:, 0] + c[:, None] * online_xy[:, 1]
    dist, _ = landmark_map.nearest(np.column_stack([gx.ravel(), gy.ravel()]))
    dist = dist.reshape(len(poses), len(online_xy))
    sig = params.sigma
    dens = np.exp(-0.5 * (dist / sig) ** 2) / (math.sqrt(2.0 * math.pi) * sig) + params.epsilon
    return np.log(dens).sum(axis=1)


def measurement_update(ps: ParticleSet, online_xy, landmark_map: LandmarkMap,
                       params: MeasurementParams = MeasurementParams()) -> ParticleSet:
    """Reweight particles by the landmark likelihood and renormalise.

    ``online_xy`` are pole centers in the vehicle frame, shape (K, 2).
    """
    online_xy = np.asarray(online_xy, dtype=float).reshape(-1, 2)
    if len(online_xy) == 0:
        return ps
    if len(landmark_map) == 0:
        raise ValueError("cannot associate online landmarks with an empty map")
    loglik = landmark_log_likelihood(ps.poses, online_xy, landmark_map, params)
    logw = np.log(ps.normalized()) + loglik
    w = np.exp(logw - logw.max())
    ps.weights = w / w.sum()
    return ps


def effective_sample_size(ps_or_weights) -> float:
    w = ps_or_weights.weights if isinstance(ps_or_weights, ParticleSet) else ps_or_weights
    w = np.asarray(w, dtype=float)
    total = w.sum()
    if not total > 0:
        raise ValueError("all particle weights are zero")
    w = w / total
    return float(1.0 / np.sum(w * w))


def systematic_indices(weights, u: float) -> np.ndarray:
    """Indices picked by N evenly spaced pointers (u + m) / N, u in [0, 1)."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    cum = np.cumsum(w)
    cum /= cum[-1]
    pointers = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cum, pointers, side="right"), n - 1)


def low_variance_resample(ps: ParticleSet, rng=None) -> ParticleSet:
    """Low-variance resampling with one uniform draw; weights reset to 1/N."""
    rng = ps.rng if rng is None else rng
    idx = systematic_indices(ps.normalized(), rng.random())
    ps.poses = ps.poses[idx]
    ps.weights = np.full(len(ps), 1.0 / len(ps))
    return ps


def pose_estimate(ps: ParticleSet, top_fraction: float = 0.1) -> Pose2D:
    """Weighted mean of the best ``top_fraction`` of the particles.

    Heading is the weighted circular mean.
    """
    if not 0 < top_fraction <= 1:
        raise ValueError(f"top_fraction must lie in (0, 1], got {top_fraction}")
    w = ps.normalized()
    k = max(1, int(math.ceil(top_fraction * len(ps) - 1e-9)))
    top = np.argsort(-w, kind="stable")[:k]
    wt = w[top]
    wt = wt / wt.sum()
    x, y = wt @ ps.poses[top, :2]
    phi = math.atan2(wt @ np.sin(ps.poses[top, 2]), wt @ np.cos(ps.poses[top, 2]))
    return Pose2D(x, y, phi)


@dataclass(frozen=True)
class FilterParams:
    n_particles: int = 5000
    measurement: MeasurementParams = MeasurementParams()
    inflation: float = 4.0
    resample_ratio: float = 0.5
    top_fraction: float = 0.1
    init_radius: float = 2.5
    init_heading: float = math.radians(5.0)
    composition: str = "right"
    segment_length: float = 1.5
    c: int = 2
    w: int = 3
    spacing: float = 0.2
    extent: tuple[float, float, float] = (30.0, 30.0, 5.0)
    z_min: float = 0.0
    detector: DetectorParams = DetectorParams()


@dataclass
class LocalizationResult:
    trajectory: Trajectory
    n_measurements: int
    n_resamples: int
    online_maps: list


def localize_run(landmark_map: LandmarkMap, scans, odometry, initial_pose: Pose2D,
                 params: FilterParams = FilterParams(), seed=0,
                 start_time: float | None = None) -> LocalizationResult:
    """Track the vehicle through odometry and online pole detections.

    ``scans[i]`` holds the rays recorded at pose ``i`` expressed in the
    odometry frame; ``odometry[i]`` moves the vehicle from pose ``i`` to
    pose ``i + 1`` and is stamped with the time of pose ``i + 1``. A pose
    estimate is logged for every pose.
    """
    rng = make_rng(seed)
    ps = initialize(initial_pose, params.init_radius, params.init_heading, params.n_particles, rng)
    odo_pose = np.zeros(3)  # integrated odometry in the odometry frame
    # scans carry their own odometry-frame registration; we only need the
    # vehicle pose at each scan time to express online poles in the body frame
    times = [float(scans.times[0]) if start_time is None else float(start_time)]
    est = [pose_estimate(ps, params.top_fraction).as_array()]
    buffer: list[Scan] = [scans[0]] if len(scans) else []
    buffer_poses = [odo_pose.copy()]
    travelled = 0.0
    history: deque = deque(maxlen=params.w)
    n_meas = n_res = 0
    online_maps = []
    for i, odo in enumerate(odometry):
        motion_update(ps, odo, params.inflation, params.composition)
        odo_pose = compose(odo_pose, odo.chi)
        travelled += float(np.hypot(odo.chi[0], odo.chi[1]))
        if i + 1 < len(scans):
            buffer.append(scans[i + 1])
            buffer_poses.append(odo_pose.copy())
        if travelled >= params.segment_length - 1e-9 and buffer:
            mid = _arc_midpoint(np.array(buffer_poses))
            geo = GridGeometry.centered(mid[:2], params.extent, params.spacing, params.z_min)
            result = build_local_map(buffer, geo, params.detector, len(online_maps))
            online_maps.append(result)
            history.append(result)
            kept = sliding_window_filter(history, params.c, params.w)
            if kept:
                body = apply(invert(odo_pose), np.array([[d.x, d.y] for d in kept]))
                measurement_update(ps, body, landmark_map, params.measurement)
                n_meas += 1
                if effective_sample_size(ps) < params.resample_ratio * len(ps):
                    low_variance_resample(ps)
                    n_res += 1
            buffer, buffer_poses, travelled = [], [], 0.0
        times.append(float(odo.time))
        est.append(pose_estimate(ps, params.top_fraction).as_array())
    return LocalizationResult(Trajectory(np.array(times), np.array(est)), n_meas, n_res, online_maps)


def _arc_midpoint(poses):
    if len(poses) == 1:
        return poses[0]
    seg = np.hypot(*np.diff(poses[:, :2], axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] == 0:
        return poses[0]
    half = 0.5 * arc[-1]
    return np.array([np.interp(half, arc, poses[:, 0]), np.interp(half, arc, poses[:, 1]), 0.0])


def integrate_odometry(odometry, start=np.zeros(3)) -> np.ndarray:
    """Poses obtained by chaining the mean increments (body-frame)."""
    out = [np.asarray(start, dtype=float)]
    for odo in odometry:
        out.append(compose(out[-1], odo.chi))
    return np.array(out)
