"""Synthetic urban worlds, a ray-cast lidar and noisy odometry.

Poles are axis-aligned square prisms by default (``pole_shape="cylinder"``
switches to round ones), walls are zero-thickness vertical panels, and
dynamic objects are boxes moving along piecewise-linear schedules. The
ground is the plane z = 0.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .localization import OdometryIncrement
from .scans import Scan
from .se2 import apply3, between, compose, invert, wrap_angle
from .trajectory import Trajectory


@dataclass
class DynamicObject:
    """Box of ``width`` x ``depth`` x ``height`` whose center follows
    ``waypoints`` (rows t, x, y); it exists only within the schedule."""

    width: float
    depth: float
    height: float
    waypoints: np.ndarray

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        if np.any(np.diff(self.waypoints[:, 0]) < 0):
            raise ValueError("dynamic object schedule must be time-monotonic")

    def position(self, t: float):
        wp = self.waypoints
        if t < wp[0, 0] or t > wp[-1, 0]:
            return None
        return np.array([np.interp(t, wp[:, 0], wp[:, 1]), np.interp(t, wp[:, 0], wp[:, 2])])


@dataclass
class WorldModel:
    poles: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))  # x, y, width, height
    walls: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))  # x0, y0, x1, y1, height
    dynamic: list = field(default_factory=list)
    pole_shape: str = "square"

    def __post_init__(self):
        self.poles = np.asarray(self.poles, dtype=float).reshape(-1, 4)
        self.walls = np.asarray(self.walls, dtype=float).reshape(-1, 5)
        if np.any(self.poles[:, 2:] <= 0) or np.any(self.walls[:, 4] <= 0):
            raise ValueError("world geometry must have positive size above ground")
        if self.pole_shape not in ("square", "cylinder"):
            raise ValueError(f"unknown pole shape {self.pole_shape!r}")


@dataclass(frozen=True)
class SensorModel:
    """Spinning multi-beam lidar mounted on the vehicle."""

    elevations_deg: tuple = tuple(np.round(np.linspace(-15.0, 15.0, 31), 6))
    n_azimuth: int = 1440
    max_range: float = 30.0
    range_noise: float = 0.02
    period: float = 0.1
    mount: tuple = (0.0, 0.0, 1.8)  # x, y, z in the vehicle frame

    def __post_init__(self):
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.range_noise < 0:
            raise ValueError("range_noise must be non-negative")

    def directions(self) -> np.ndarray:
        """Unit beam directions in the sensor frame, (channels * azimuths, 3)."""
        el = np.radians(np.asarray(self.elevations_deg, dtype=float))
        az = np.arange(self.n_azimuth) * (2.0 * np.pi / self.n_azimuth)
        e, a = np.meshgrid(el, az, indexing="ij")
        return np.column_stack([(np.cos(e) * np.cos(a)).ravel(), (np.cos(e) * np.sin(a)).ravel(),
                                np.sin(e).ravel()])


def _primitives(world: WorldModel, xy, reach, time):
    poles = world.poles
    if len(poles):
        near = np.hypot(poles[:, 0] - xy[0], poles[:, 1] - xy[1]) <= reach + poles[:, 2]
        poles = poles[near]
    if world.pole_shape == "square":
        h = 0.5 * poles[:, 2]
        boxes = [np.column_stack([poles[:, 0] - h, poles[:, 1] - h, np.zeros(len(poles)),
                                  poles[:, 0] + h, poles[:, 1] + h, poles[:, 3]])]
        cyl = np.zeros((0, 4))
    else:
        boxes = []
        cyl = np.column_stack([poles[:, 0], poles[:, 1], 0.5 * poles[:, 2], poles[:, 3]])
    for obj in world.dynamic:
        p = obj.position(time)
        if p is None or np.hypot(*(p - xy)) > reach + max(obj.width, obj.depth):
            continue
        boxes.append(np.array([[p[0] - 0.5 * obj.width, p[1] - 0.5 * obj.depth, 0.0,
                                p[0] + 0.5 * obj.width, p[1] + 0.5 * obj.depth, obj.height]]))
    boxes = np.vstack(boxes) if boxes else np.zeros((0, 6))
    return np.ascontiguousarray(boxes), np.ascontiguousarray(cyl), np.ascontiguousarray(world.walls)


def cast_scan(world: WorldModel, sensor: SensorModel, pose, time: float = 0.0, rng=None,
              ground: bool = True) -> Scan:
    """One revolution from vehicle ``pose`` (x, y, phi), in the map frame.

    Beams return the nearest surface within range, perturbed radially by
    Gaussian noise; beams that hit nothing end at max range with
    ``hit=False``.
    """
    pose = np.asarray(pose, dtype=float)
    origin = apply3(pose, np.asarray(sensor.mount, dtype=float))
    dirs_v = sensor.directions()
    c, s = np.cos(pose[2]), np.sin(pose[2])
    dirs = np.column_stack([c * dirs_v[:, 0] - s * dirs_v[:, 1], s * dirs_v[:, 0] + c * dirs_v[:, 1],
                            dirs_v[:, 2]])
    boxes, cyl, walls = _primitives(world, origin[:2], sensor.max_range, time)
    rng_ = _kernels.cast_beams(origin, np.ascontiguousarray(dirs), boxes, cyl, walls,
                               float(sensor.max_range), ground)
    hit = np.isfinite(rng_)
    r = np.where(hit, rng_, sensor.max_range)
    if sensor.range_noise > 0:
        if rng is None:
            raise ValueError("range noise requires an rng")
        noise = rng.standard_normal(len(r)) * sensor.range_noise
        r = np.where(hit, np.maximum(r + noise, 1e-3), r)
    ends = origin + dirs * r[:, None]
    return Scan(float(time), np.broadcast_to(origin, ends.shape).copy(), ends, hit)


# ---------------------------------------------------------------- trajectories

def sample_path(points, speed: float, rate: float, t0: float = 0.0) -> Trajectory:
    """Trajectory driving along a dense polyline at constant speed, one pose
    per sensor revolution, heading along the path tangent."""
    pts = np.asarray(points, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    keep = np.concatenate([[True], seg > 0])
    pts = pts[keep]
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    step = speed / rate
    s = np.arange(0.0, arc[-1] + 1e-9, step)
    x = np.interp(s, arc, pts[:, 0])
    y = np.interp(s, arc, pts[:, 1])
    tang = np.gradient(pts, arc, axis=0)
    heading = np.unwrap(np.arctan2(tang[:, 1], tang[:, 0]))
    phi = wrap_angle(np.interp(s, arc, heading))
    return Trajectory(t0 + s / speed, np.column_stack([x, y, phi]))


def rounded_rectangle(width: float, height: float, radius: float, center=(0.0, 0.0),
                      resolution: float = 0.05) -> np.ndarray:
    """Dense counter-clockwise closed polyline of a rounded rectangle."""
    cx, cy = center
    hw, hh = 0.5 * width - radius, 0.5 * height - radius
    corners = [(hw, -hh, -0.5 * np.pi), (hw, hh, 0.0), (-hw, hh, 0.5 * np.pi), (-hw, -hh, np.pi)]
    pts = []
    for k, (ox, oy, a0) in enumerate(corners):
        a = np.linspace(a0, a0 + 0.5 * np.pi, max(8, int(0.5 * np.pi * radius / resolution)))
        pts.append(np.column_stack([cx + ox + radius * np.cos(a), cy + oy + radius * np.sin(a)]))
        nxt = corners[(k + 1) % 4]
        end = pts[-1][-1]
        start = np.array([cx + nxt[0] + radius * np.cos(nxt[2]), cy + nxt[1] + radius * np.sin(nxt[2])])
        n = max(2, int(np.hypot(*(start - end)) / resolution))
        pts.append(np.linspace(end, start, n)[1:-1])
    pts = np.vstack(pts)
    return np.vstack([pts, pts[:1]])


def figure_eight(radius: float, center=(0.0, 0.0), laps: int = 1, resolution: float = 0.05) -> np.ndarray:
    """Dense polyline of two tangent circles traversed as an eight."""
    n = max(64, int(2 * np.pi * radius / resolution))
    a = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    right = np.column_stack([radius - radius * np.cos(a), radius * np.sin(a)])
    left = np.column_stack([-radius + radius * np.cos(a), radius * np.sin(a)])
    lap = np.vstack([right, left])
    pts = np.vstack([lap] * laps + [lap[:1]])
    return pts + np.asarray(center, dtype=float)


def make_route(kind: str, length: float, center=(0.0, 0.0), laps: int = 1) -> np.ndarray:
    """Closed test route of roughly ``length`` metres: ``"loop"`` (rounded
    rectangle, 163:100 aspect) or ``"figure8"`` (``laps`` times around)."""
    if not length > 0:
        raise ValueError("route length must be positive")
    if kind == "loop":
        k = length / (2 * 263.0 - 8 * 15.0 + 2 * np.pi * 15.0)
        return rounded_rectangle(163.0 * k, 100.0 * k, 15.0 * k, center)
    if kind == "figure8":
        return figure_eight(length / (4 * np.pi * laps), center, laps)
    raise ValueError(f"unknown route kind {kind!r}")


# ---------------------------------------------------------------- worlds

@dataclass(frozen=True)
class WorldSpec:
    extent: tuple = (200.0, 200.0)
    origin: tuple = (0.0, 0.0)
    n_poles: int = 40
    min_separation: float = 4.0
    width_range: tuple = (0.08, 0.12)
    height_range: tuple = (2.0, 6.0)
    route: np.ndarray | None = None  # polyline the poles should line
    band: tuple = (2.5, 9.0)  # lateral distance of poles from the route
    n_dynamic: int = 0
    dynamic_size: tuple = (0.4, 0.4, 1.8)
    dynamic_speed: float = 3.0
    pole_shape: str = "square"
    max_attempts: int = 200


def generate_world(spec: WorldSpec, rng, trajectory: Trajectory | None = None) -> WorldModel:
    """Random world with pole placement by rejection sampling.

    With a ``route`` the poles are scattered in a band along it, like street
    furniture. Dynamic objects cross ``trajectory`` (when given) a few
    metres ahead of the vehicle; otherwise they cross the extent.
    """
    if min(spec.extent) <= 0:
        raise ValueError("world extent must be positive")
    ox, oy = spec.origin
    ex, ey = spec.extent
    route = None if spec.route is None else np.asarray(spec.route, dtype=float)
    route_tree = None
    if route is not None:
        seg = np.hypot(*np.diff(route, axis=0).T)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        dense_s = np.arange(0.0, arc[-1], 0.1)
        dense = np.column_stack([np.interp(dense_s, arc, route[:, 0]), np.interp(dense_s, arc, route[:, 1])])
        route_tree = cKDTree(dense)

    poles = []
    attempts = 0
    budget = spec.max_attempts * max(spec.n_poles, 1)
    while len(poles) < spec.n_poles:
        attempts += 1
        if attempts > budget:
            raise ValueError(f"could not place {spec.n_poles} poles with separation "
                             f"{spec.min_separation} m after {budget} attempts")
        if route is None:
            p = np.array([ox + rng.uniform(0, ex), oy + rng.uniform(0, ey)])
        else:
            s = rng.uniform(0, arc[-1])
            i = min(np.searchsorted(arc, s, side="right") - 1, len(route) - 2)
            d = route[i + 1] - route[i]
            d = d / np.hypot(*d)
            normal = np.array([-d[1], d[0]]) * rng.choice([-1.0, 1.0])
            base = route[i] + (s - arc[i]) * d
            p = base + normal * rng.uniform(*spec.band)
            if route_tree.query(p)[0] < spec.band[0] - 1e-9:
                continue
        if not (ox <= p[0] <= ox + ex and oy <= p[1] <= oy + ey):
            continue
        if poles and np.min(np.hypot(*(np.array(poles)[:, :2] - p).T)) < spec.min_separation:
            continue
        poles.append([p[0], p[1], rng.uniform(*spec.width_range), rng.uniform(*spec.height_range)])

    dynamic = []
    for _ in range(spec.n_dynamic):
        dynamic.append(_crossing_object(spec, rng, trajectory))
    return WorldModel(np.array(poles).reshape(-1, 4), dynamic=dynamic, pole_shape=spec.pole_shape)


def _crossing_object(spec: WorldSpec, rng, trajectory):
    w, d, h = spec.dynamic_size
    v = spec.dynamic_speed
    if trajectory is None:
        ox, oy = spec.origin
        ex, ey = spec.extent
        a = np.array([ox + rng.uniform(0, ex), oy])
        b = np.array([ox + rng.uniform(0, ex), oy + ey])
        dur = np.hypot(*(b - a)) / v
        t0 = rng.uniform(0, 100.0)
        return DynamicObject(w, d, h, [[t0, *a], [t0 + dur, *b]])
    k = rng.integers(len(trajectory) // 10, max(len(trajectory) * 9 // 10, len(trajectory) // 10 + 1))
    x, y, phi = trajectory.poses[k]
    t_k = trajectory.times[k]
    ahead = rng.uniform(4.0, 10.0)
    cross = np.array([x + ahead * np.cos(phi), y + ahead * np.sin(phi)])
    normal = np.array([-np.sin(phi), np.cos(phi)])
    half = 12.0
    dur = 2 * half / v
    a, b = cross - half * normal, cross + half * normal
    return DynamicObject(w, d, h, [[t_k - 0.5 * dur, *a], [t_k + 0.5 * dur, *b]])


# ---------------------------------------------------------------- runs

@dataclass(frozen=True)
class OdometryNoise:
    """Standard deviations accumulated per metre travelled (variance grows
    linearly with distance)."""

    x: float = 0.02
    y: float = 0.02
    phi: float = np.radians(0.2)


class ScanSequence(Sequence):
    """Lazily cast scans of a run, regenerated deterministically per index."""

    def __init__(self, run: "SimRun", frame: str):
        if frame not in ("map", "vehicle", "odom"):
            raise ValueError(f"unknown frame {frame!r}")
        self.run = run
        self.frame = frame
        self.times = run.ground_truth.times

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        i = int(i)
        if i < 0:
            i += len(self)
        scan = self.run.cast(i)
        if self.frame == "map":
            return scan
        vehicle = scan.transformed(invert(self.run.ground_truth.poses[i]))
        if self.frame == "vehicle":
            return vehicle
        return vehicle.transformed(self.run.odometry_poses[i])


@dataclass
class SimRun:
    world: WorldModel
    sensor: SensorModel
    ground_truth: Trajectory
    odometry: list
    odometry_poses: np.ndarray
    seed: int
    ground: bool = True

    def cast(self, i: int) -> Scan:
        rng = np.random.default_rng([self.seed, 1, i])
        return cast_scan(self.world, self.sensor, self.ground_truth.poses[i],
                         self.ground_truth.times[i], rng, self.ground)

    def scans(self, frame: str = "odom") -> ScanSequence:
        """Scans registered in the ``"map"`` frame (true poses), the
        ``"odom"`` frame (integrated noisy odometry) or the ``"vehicle"``
        frame."""
        return ScanSequence(self, frame)


def simulate_run(world: WorldModel, sensor: SensorModel, trajectory: Trajectory,
                 noise: OdometryNoise = OdometryNoise(), seed: int = 0, ground: bool = True) -> SimRun:
    """Odometry between consecutive trajectory poses plus lazily cast scans.

    Each increment carries the covariance its noise was drawn from; the
    odometry frame starts at the identity.
    """
    rng = np.random.default_rng([seed, 0])
    poses = trajectory.poses
    rel = between(poses[:-1], poses[1:])
    steps = np.hypot(rel[:, 0], rel[:, 1])
    var = np.array([noise.x, noise.y, noise.phi]) ** 2
    odometry = []
    odo_poses = [np.zeros(3)]
    for k in range(len(rel)):
        cov = np.diag(var * steps[k])
        chi = rel[k] + rng.standard_normal(3) * np.sqrt(var * steps[k])
        odometry.append(OdometryIncrement(chi, cov, float(trajectory.times[k + 1])))
        odo_poses.append(compose(odo_poses[-1], chi))
    return SimRun(world, sensor, trajectory, odometry, np.array(odo_poses), seed, ground)


def visible_poles(world: WorldModel, trajectory: Trajectory, reach: float) -> np.ndarray:
    """Indices of poles within ``reach`` metres of some trajectory pose."""
    if len(world.poles) == 0:
        return np.zeros(0, np.int64)
    d, _ = cKDTree(trajectory.xy).query(world.poles[:, :2])
    return np.flatnonzero(d <= reach)
