from __future__ import annotations

import numpy as np
import pytest

from poleloc.localization import integrate_odometry
from poleloc.simulator import (DynamicObject, OdometryNoise, SensorModel, WorldModel, WorldSpec, cast_scan,
                               generate_world, make_route, sample_path, simulate_run, visible_poles)
from poleloc.trajectory import Trajectory

FLAT = SensorModel(elevations_deg=(0.0,), n_azimuth=4, range_noise=0.0, mount=(0.0, 0.0, 1.0))


def _ranges(scan):
    return np.linalg.norm(scan.ends - scan.starts, axis=1)


def test_square_pole_range():
    world = WorldModel(poles=[[5.0, 0.0, 0.4, 3.0]])
    scan = cast_scan(world, FLAT, [0.0, 0.0, 0.0])
    # azimuth 0 looks along +x and meets the near face at x = 4.8
    assert _ranges(scan)[0] == pytest.approx(4.8, abs=1e-12)
    assert scan.hits[0]
    assert not scan.hits[1:].any()


def test_cylinder_pole_range():
    world = WorldModel(poles=[[5.0, 0.0, 0.4, 3.0]], pole_shape="cylinder")
    assert _ranges(cast_scan(world, FLAT, [0.0, 0.0, 0.0]))[0] == pytest.approx(4.8, abs=1e-12)


def test_empty_world_returns_max_range_misses():
    sensor = SensorModel(range_noise=0.0, n_azimuth=36)
    scan = cast_scan(WorldModel(), sensor, [0.0, 0.0, 0.3], ground=False)
    assert not scan.hits.any()
    np.testing.assert_allclose(_ranges(scan), sensor.max_range)


def test_ground_returns_for_downward_beams():
    sensor = SensorModel(elevations_deg=(-10.0,), n_azimuth=8, range_noise=0.0, mount=(0, 0, 1.8))
    scan = cast_scan(WorldModel(), sensor, [0.0, 0.0, 0.0])
    assert scan.hits.all()
    np.testing.assert_allclose(scan.ends[:, 2], 0.0, atol=1e-12)


def test_wall_shadows_pole():
    world = WorldModel(poles=[[5.0, 0.0, 0.4, 3.0]], walls=[[3.0, -2.0, 3.0, 2.0, 4.0]])
    assert _ranges(cast_scan(world, FLAT, [0.0, 0.0, 0.0]))[0] == pytest.approx(3.0, abs=1e-12)


def test_dynamic_object_exists_only_on_schedule():
    obj = DynamicObject(0.4, 0.4, 2.0, [[1.0, 5.0, 0.0], [2.0, 5.0, 0.0]])
    world = WorldModel(dynamic=[obj])
    assert cast_scan(world, FLAT, [0, 0, 0], time=1.5).hits[0]
    assert not cast_scan(world, FLAT, [0, 0, 0], time=2.5).hits[0]
    with pytest.raises(ValueError):
        DynamicObject(0.4, 0.4, 2.0, [[2.0, 0, 0], [1.0, 0, 0]])


def test_hit_endpoints_lie_on_surfaces_within_noise():
    world = WorldModel(poles=[[6.0, 1.0, 0.3, 4.0]])
    sensor = SensorModel(n_azimuth=2880, range_noise=0.02)
    clean = cast_scan(world, SensorModel(n_azimuth=2880, range_noise=0.0), [0, 0, 0])
    noisy = cast_scan(world, sensor, [0, 0, 0], rng=np.random.default_rng(0))
    dev = (_ranges(noisy) - _ranges(clean))[clean.hits]
    assert np.all(np.abs(dev) <= 5 * 0.02)
    assert abs(dev.std() - 0.02) < 0.002


def test_noise_requires_rng():
    with pytest.raises(ValueError):
        cast_scan(WorldModel(), SensorModel(), [0, 0, 0])


def test_sensor_validation():
    with pytest.raises(ValueError):
        SensorModel(max_range=0.0)
    with pytest.raises(ValueError):
        SensorModel(range_noise=-0.1)


# ---------------------------------------------------------------- worlds

def test_world_generation_respects_separation_and_seed():
    spec = WorldSpec(n_poles=40, min_separation=4.0)
    a = generate_world(spec, np.random.default_rng(5))
    b = generate_world(spec, np.random.default_rng(5))
    assert a.poles.tobytes() == b.poles.tobytes()
    d = np.hypot(*(a.poles[:, None, :2] - a.poles[None, :, :2]).transpose(2, 0, 1))
    assert d[np.triu_indices(40, 1)].min() >= 4.0
    assert np.all((a.poles[:, :2] >= 0) & (a.poles[:, :2] <= 200))
    lo, hi = spec.width_range
    assert np.all((a.poles[:, 2] >= lo) & (a.poles[:, 2] <= hi))


def test_route_world_stays_in_band():
    route = make_route("loop", 500.0, (100.0, 100.0))
    spec = WorldSpec(route=route)
    w = generate_world(spec, np.random.default_rng(0))
    traj = sample_path(route, 2.5, 10.0)
    assert len(visible_poles(w, traj, spec.band[1] + 0.01)) == 40
    assert len(visible_poles(w, traj, spec.band[0] - 0.05)) == 0


def test_zero_density_and_infeasible_density():
    assert len(generate_world(WorldSpec(n_poles=0), np.random.default_rng(0)).poles) == 0
    with pytest.raises(ValueError):
        generate_world(WorldSpec(extent=(10.0, 10.0), n_poles=50, min_separation=4.0, max_attempts=20),
                       np.random.default_rng(0))


def test_routes_have_requested_length():
    for kind, laps in [("loop", 1), ("figure8", 2)]:
        tr = sample_path(make_route(kind, 500.0, (100, 100), laps), 2.5, 10.0)
        assert tr.length == pytest.approx(500.0, rel=0.01)
    with pytest.raises(ValueError):
        make_route("spiral", 100.0)


def test_crossing_objects_meet_the_route():
    route = make_route("loop", 500.0, (100.0, 100.0))
    traj = sample_path(route, 2.5, 10.0)
    w = generate_world(WorldSpec(route=route, n_dynamic=5), np.random.default_rng(2), traj)
    assert len(w.dynamic) == 5
    for obj in w.dynamic:
        t = obj.waypoints[:, 0]
        ts = np.linspace(t[0], t[-1], 200)
        ts = ts[(ts >= traj.times[0]) & (ts <= traj.times[-1])]
        gap = [np.hypot(*(obj.position(s) - traj.interpolate([s])[0, :2])) for s in ts]
        assert min(gap) < 15.0


# ---------------------------------------------------------------- runs

def _short_traj():
    return sample_path(make_route("loop", 120.0, (0.0, 0.0)), 2.5, 10.0)


def test_noise_free_odometry_integrates_to_truth():
    traj = _short_traj()
    run = simulate_run(WorldModel(), SensorModel(), traj, OdometryNoise(0.0, 0.0, 0.0), seed=0)
    poses = integrate_odometry(run.odometry, traj.poses[0])
    np.testing.assert_allclose(poses[:, :2], traj.poses[:, :2], atol=1e-9)
    assert np.abs(np.angle(np.exp(1j * (poses[:, 2] - traj.poses[:, 2])))).max() < 1e-9
    assert run.odometry[0].time == traj.times[1] and len(run.odometry) == len(traj) - 1


def test_odometry_drifts_with_noise():
    traj = _short_traj()
    run = simulate_run(WorldModel(), SensorModel(), traj, OdometryNoise(), seed=3)
    poses = integrate_odometry(run.odometry, traj.poses[0])
    assert np.hypot(*(poses[-1, :2] - traj.poses[-1, :2])) > 0
    # attached covariance matches the per-metre model
    o = run.odometry[10]
    step = np.hypot(*o.chi[:2])
    assert o.sigma[0, 0] == pytest.approx(0.02 ** 2 * step, rel=0.05)


def test_runs_are_deterministic_and_frames_consistent():
    traj = Trajectory(np.arange(5) * 0.1, np.column_stack([np.arange(5) * 0.25, np.zeros(5), np.zeros(5)]))
    world = WorldModel(poles=[[5.0, 2.0, 0.2, 3.0]])
    a = simulate_run(world, SensorModel(n_azimuth=90), traj, seed=7)
    b = simulate_run(world, SensorModel(n_azimuth=90), traj, seed=7)
    for frame in ("map", "odom", "vehicle"):
        assert a.scans(frame)[3].ends.tobytes() == b.scans(frame)[3].ends.tobytes()
    m, v = a.scans("map")[2], a.scans("vehicle")[2]
    np.testing.assert_allclose(v.transformed(traj.poses[2]).ends, m.ends, atol=1e-12)
    with pytest.raises(ValueError):
        a.scans("body")
