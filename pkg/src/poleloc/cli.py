"""Command-line front end: ``poleloc <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import fileio
from .config import ConfigError, PipelineConfig, load_config
from .evaluation import compare_trajectories, estimate_epsilon
from .grid import GridGeometry, PriorEstimationError
from .localization import localize_run
from .mapping import LandmarkMap, MapBuilder, build_global_map, extend_map, segment_trajectory
from .poles import extract_poles
from .scans import concat_rays
from .se2 import Pose2D
from .simulator import generate_world, make_route, sample_path, simulate_run

log = logging.getLogger("poleloc")


class CommandError(Exception):
    """User-facing failure; printed without a traceback."""


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.with_updates(seed=args.seed)
    return cfg


def _require(path, what):
    if not os.path.exists(path):
        raise CommandError(f"{what} file not found: {path}")
    return path


def _parse_pose(text) -> Pose2D:
    try:
        x, y, phi = (float(v) for v in text.split(","))
    except ValueError:
        raise CommandError(f"--initial must be 'x,y,phi', got {text!r}") from None
    return Pose2D(x, y, phi)


# ---------------------------------------------------------------- commands

def cmd_simulate(args, cfg):
    os.makedirs(args.out, exist_ok=True)
    s = cfg.sim
    center = (0.5 * s.extent_x, 0.5 * s.extent_y)
    route = make_route(s.route, s.route_length, center, laps=2 if s.route == "figure8" else 1)
    traj = sample_path(route, s.speed, 1.0 / 0.1)
    world = generate_world(cfg.world_spec(route), np.random.default_rng([cfg.seed, 7]), traj)
    run = simulate_run(world, cfg.sensor_model(), traj, cfg.odometry_noise(), seed=cfg.seed)
    fileio.write_world(os.path.join(args.out, "world.csv"), world)
    fileio.write_trajectory(os.path.join(args.out, "ground_truth.csv"), traj)
    fileio.write_odometry(os.path.join(args.out, "odometry.csv"), run.odometry)
    for frame in args.frames.split(","):
        fileio.write_scans(os.path.join(args.out, f"scans_{frame}.bin"), run.scans(frame))
    print(f"simulated {len(traj)} scans over {traj.length:.1f} m with {len(world.poles)} poles "
          f"-> {args.out}")


def cmd_extract(args, cfg):
    scans = fileio.read_scans(_require(args.scans, "scan"))
    starts, ends, hits = concat_rays(scans)
    if len(hits) == 0:
        raise CommandError(f"{args.scans} holds no rays")
    center = starts[:, :2].mean(axis=0) if args.center is None else \
        np.array([float(v) for v in args.center.split(",")])
    mp = cfg.mapping_params()
    geo = GridGeometry.centered(center, mp.extent, mp.spacing, mp.z_min)
    dets = extract_poles(starts, ends, hits, geo, mp.detector)
    fileio.write_landmarks(args.out, LandmarkMap(dets))
    print(f"{len(dets)} poles -> {args.out}")


def cmd_build_map(args, cfg):
    scans = fileio.read_scans(_require(args.scans, "scan"))
    traj = fileio.read_trajectory(_require(args.trajectory, "trajectory"))
    lm = build_global_map(scans, traj, cfg.mapping_params())
    fileio.write_landmarks(args.out, lm)
    print(f"{len(lm)} landmarks -> {args.out}")


def cmd_extend_map(args, cfg):
    lm = fileio.read_landmarks(_require(args.map, "map"))
    prior_traj = fileio.read_trajectory(_require(args.map_trajectory, "trajectory"))
    lm.visited = prior_traj.xy.copy()
    scans = fileio.read_scans(_require(args.scans, "scan"))
    traj = fileio.read_trajectory(_require(args.trajectory, "trajectory"))
    min_d = cfg.mapping.min_distance if args.min_distance is None else args.min_distance
    out, f_map = extend_map(lm, scans, traj, min_d, cfg.mapping_params())
    fileio.write_landmarks(args.out, out)
    print(f"{len(out)} landmarks (f_map={f_map:.4f}) -> {args.out}")


def cmd_localize(args, cfg):
    lm = fileio.read_landmarks(_require(args.map, "map"))
    if len(lm) == 0:
        raise CommandError(f"map {args.map} holds no landmarks")
    scans = fileio.read_scans(_require(args.scans, "scan"))
    odometry = fileio.read_odometry(_require(args.odometry, "odometry"))
    if args.initial is not None:
        init = _parse_pose(args.initial)
    elif args.ground_truth is not None:
        gt = fileio.read_trajectory(_require(args.ground_truth, "ground-truth"))
        init = Pose2D.from_array(gt.poses[0])
    else:
        raise CommandError("localize needs --initial or --ground-truth for the start pose")
    if len(odometry) != len(scans) - 1:
        raise CommandError(f"expected {len(scans) - 1} odometry records for {len(scans)} scans, "
                           f"got {len(odometry)}")
    res = localize_run(lm, scans, odometry, init, cfg.filter_params(), seed=cfg.seed)
    fileio.write_trajectory(args.out, res.trajectory)
    print(f"{len(res.trajectory)} poses, {res.n_measurements} measurement updates, "
          f"{res.n_resamples} resamplings -> {args.out}")


def cmd_evaluate(args, cfg):
    est = fileio.read_trajectory(_require(args.estimate, "estimate"))
    gt = fileio.read_trajectory(_require(args.truth, "ground-truth"))
    rep = compare_trajectories(est, gt, args.spacing)
    text = fileio.format_report(rep.as_dict())
    if args.out:
        fileio.write_report(args.out, rep.as_dict())
    if args.dump_errors:
        fileio.write_error_series(args.dump_errors, rep.times, rep.pos_errors, rep.ang_errors)
    sys.stdout.write(text)


def cmd_estimate_epsilon(args, cfg):
    lm = fileio.read_landmarks(_require(args.map, "map"))
    scans = fileio.read_scans(_require(args.scans, "scan"))
    traj = fileio.read_trajectory(_require(args.trajectory, "trajectory"))
    mp = cfg.mapping_params()
    builder = MapBuilder(mp)
    for seg in segment_trajectory(traj, mp.segment_length, scans.times):
        builder.add_segment((scans[i] for i in seg.scan_indices), seg.midpoint()[:2], seg.index)
    eps = estimate_epsilon(lm, builder.local_maps)
    sys.stdout.write(fileio.format_report({"epsilon": eps}))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="poleloc", description="Pole-landmark mapping and localization.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic run")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--frames", default="map,odom", help="scan frames to write (map, odom, vehicle)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("extract", parents=[common], help="detect poles in one grid of scans")
    s.add_argument("--scans", required=True)
    s.add_argument("--center", help="grid center 'x,y' (default: mean sensor position)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("build-map", parents=[common], help="build a landmark map")
    s.add_argument("--scans", required=True, help="scans registered in the map frame")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_map)

    s = sub.add_parser("extend-map", parents=[common], help="add landmarks from a new run")
    s.add_argument("--map", required=True)
    s.add_argument("--map-trajectory", required=True, help="trajectory the map was built from")
    s.add_argument("--scans", required=True)
    s.add_argument("--trajectory", required=True)
    s.add_argument("--min-distance", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extend_map)

    s = sub.add_parser("localize", parents=[common], help="track a run against a map")
    s.add_argument("--map", required=True)
    s.add_argument("--scans", required=True, help="scans registered in the odometry frame")
    s.add_argument("--odometry", required=True)
    s.add_argument("--initial", help="start pose 'x,y,phi' in the map frame")
    s.add_argument("--ground-truth", help="take the start pose from this trajectory")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_localize)

    s = sub.add_parser("evaluate", parents=[common], help="compare two trajectories")
    s.add_argument("--estimate", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--spacing", type=float, default=1.0)
    s.add_argument("--out", help="report file (key=value)")
    s.add_argument("--dump-errors", help="per-sample error CSV")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("estimate-epsilon", parents=[common], help="unmatched-landmark fraction")
    s.add_argument("--map", required=True, help="map from run A")
    s.add_argument("--scans", required=True, help="map-frame scans of run B")
    s.add_argument("--trajectory", required=True, help="trajectory of run B")
    s.set_defaults(func=cmd_estimate_epsilon)
    return p


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the diagnostic
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        args.func(args, cfg)
    except (CommandError, ConfigError, fileio.FormatError, FileNotFoundError,
            PriorEstimationError, ValueError) as exc:
        print(f"poleloc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_command())
