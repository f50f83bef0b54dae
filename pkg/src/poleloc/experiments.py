"""Desk-scale simulated experiments: one world, a mapping run, a
localization run, and the resulting error report.

Seeds are split into independent streams: the world uses ``[seed, 7]``,
the mapping drive ``2 * seed`` and the localization drive ``2 * seed + 1``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import fileio
from .evaluation import TrajectoryErrorReport, compare_trajectories
from .localization import FilterParams, LocalizationResult, localize_run
from .mapping import LandmarkMap, MappingParams, build_global_map
from .se2 import Pose2D
from .simulator import (OdometryNoise, SensorModel, SimRun, WorldModel, WorldSpec, generate_world,
                        make_route, sample_path, simulate_run)
from .trajectory import Trajectory


@dataclass(frozen=True)
class ScenarioSpec:
    route: str = "loop"
    route_length: float = 500.0
    laps: int = 1
    extent: tuple = (200.0, 200.0)
    n_poles: int = 40
    min_separation: float = 4.0
    n_dynamic: int = 0
    speed: float = 2.5
    rate: float = 10.0
    sensor: SensorModel = field(default_factory=SensorModel)
    noise: OdometryNoise = field(default_factory=OdometryNoise)


@dataclass
class Scenario:
    spec: ScenarioSpec
    seed: int
    world: WorldModel
    trajectory: Trajectory

    def run(self, which: str) -> SimRun:
        """The ``"mapping"`` or ``"localization"`` drive through the world."""
        sub = {"mapping": 2 * self.seed, "localization": 2 * self.seed + 1}[which]
        return simulate_run(self.world, self.spec.sensor, self.trajectory, self.spec.noise, seed=sub)


def make_scenario(spec: ScenarioSpec = ScenarioSpec(), seed: int = 0) -> Scenario:
    center = (0.5 * spec.extent[0], 0.5 * spec.extent[1])
    route = make_route(spec.route, spec.route_length, center, spec.laps)
    traj = sample_path(route, spec.speed, spec.rate)
    wspec = WorldSpec(extent=spec.extent, n_poles=spec.n_poles, min_separation=spec.min_separation,
                      route=route, n_dynamic=spec.n_dynamic)
    world = generate_world(wspec, np.random.default_rng([seed, 7]), traj)
    return Scenario(spec, seed, world, traj)


def without_dynamic(scn: Scenario) -> Scenario:
    return Scenario(scn.spec, scn.seed, replace(scn.world, dynamic=[]), scn.trajectory)


def build_map(scn: Scenario, params: MappingParams = MappingParams()) -> LandmarkMap:
    """Landmark map from the mapping drive, registered with true poses."""
    run = scn.run("mapping")
    return build_global_map(run.scans("map"), scn.trajectory, params)


def localize(scn: Scenario, landmark_map: LandmarkMap,
             params: FilterParams = FilterParams()) -> tuple[LocalizationResult, TrajectoryErrorReport]:
    """Track the localization drive (odometry-registered scans) against
    ``landmark_map``, starting at the true initial pose."""
    run = scn.run("localization")
    res = localize_run(landmark_map, run.scans("odom"), run.odometry,
                       Pose2D.from_array(scn.trajectory.poses[0]), params, seed=scn.seed)
    return res, compare_trajectories(res.trajectory, scn.trajectory, 1.0)


def map_errors(world: WorldModel, landmark_map: LandmarkMap) -> tuple[np.ndarray, np.ndarray]:
    """Per landmark: index of the nearest true pole and the center error."""
    if len(landmark_map) == 0 or len(world.poles) == 0:
        return np.zeros(0, np.int64), np.zeros(0)
    d = np.hypot(*(landmark_map.centers[:, None, :] - world.poles[None, :, :2]).transpose(2, 0, 1))
    idx = np.argmin(d, axis=1)
    return idx, d[np.arange(len(idx)), idx]


def save_outputs(directory, scn: Scenario, landmark_map: LandmarkMap | None = None,
                 result: LocalizationResult | None = None,
                 report: TrajectoryErrorReport | None = None):
    """Persist everything an experiment produced (for byte comparisons)."""
    os.makedirs(directory, exist_ok=True)
    fileio.write_world(os.path.join(directory, "world.csv"), scn.world)
    fileio.write_trajectory(os.path.join(directory, "ground_truth.csv"), scn.trajectory)
    if landmark_map is not None:
        fileio.write_landmarks(os.path.join(directory, "map.csv"), landmark_map)
    if result is not None:
        fileio.write_trajectory(os.path.join(directory, "estimate.csv"), result.trajectory)
    if report is not None:
        fileio.write_report(os.path.join(directory, "report.txt"), report.as_dict())
        fileio.write_error_series(os.path.join(directory, "errors.csv"), report.times,
                                  report.pos_errors, report.ang_errors)
