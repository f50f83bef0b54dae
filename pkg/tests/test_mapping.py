from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poleloc.grid import live_grid_count
from poleloc.mapping import (LandmarkMap, LocalMapResult, MappingParams, PoleLandmark, build_global_map,
                             extend_map, local_geometry, merge_overlapping, segment_trajectory,
                             sliding_window_filter, squares_overlap)
from poleloc.poles import PoleDetection
from poleloc.scans import ScanList
from poleloc.simulator import SensorModel, WorldModel, rounded_rectangle, sample_path, simulate_run
from poleloc.trajectory import Trajectory

from oracles import nearest_linear


def _straight(length, step=0.1):
    s = np.arange(0.0, length + 1e-9, step)
    return Trajectory(s, np.column_stack([s, np.zeros_like(s), np.zeros_like(s)]))


# ---------------------------------------------------------------- segments

def test_segment_counts():
    assert len(segment_trajectory(_straight(4.5), 1.5)) == 3
    assert len(segment_trajectory(_straight(1.0), 1.5)) == 1


def test_segments_tile_a_curved_path():
    a = np.linspace(0, 1.7 * np.pi, 400)
    traj = Trajectory(a, np.column_stack([10 * np.cos(a), 10 * np.sin(a), a + np.pi / 2]))
    segs = segment_trajectory(traj, 1.5)
    total = traj.length
    assert sum(s.arc_length for s in segs) == pytest.approx(total, abs=1e-9)
    for s in segs[:-1]:
        assert s.arc_length == pytest.approx(1.5, abs=1e-9)
    for s, nxt in zip(segs, segs[1:]):
        np.testing.assert_allclose(s.poses[-1, :2], nxt.poses[0, :2], atol=1e-12)


def test_scan_indices_follow_timestamps():
    traj = _straight(4.5)
    times = np.arange(0.05, 4.5, 0.3)
    segs = segment_trajectory(traj, 1.5, times)
    got = np.concatenate([s.scan_indices for s in segs])
    np.testing.assert_array_equal(got, np.arange(len(times)))
    for s in segs:
        assert np.all((times[s.scan_indices] >= s.t_start) & (times[s.scan_indices] <= s.t_end))


def test_segment_errors():
    with pytest.raises(ValueError):
        segment_trajectory(_straight(3.0), 0.0)
    with pytest.raises(ValueError):
        segment_trajectory(Trajectory([0.0], [[0.0, 0.0, 0.0]]), 1.5)


# ---------------------------------------------------------------- merging

def _det(x, y, width=0.4, score=1.0):
    return PoleDetection(x, y, width, score)


def test_merge_pair_to_midpoint():
    out = merge_overlapping([_det(0, 0), _det(0.1, 0)])
    assert len(out) == 1
    assert (out[0].x, out[0].y, out[0].width) == pytest.approx((0.05, 0.0, 0.4))


def test_distant_poles_kept():
    out = merge_overlapping([_det(0, 0), _det(5, 0)])
    assert [(p.x, p.y) for p in out] == [(0, 0), (5, 0)]


def test_chain_merges_to_weighted_centroid():
    dets = [_det(0.0, 0, score=0.9), _det(0.3, 0, score=0.6), _det(0.6, 0, score=0.3)]
    # the outer two do not overlap each other, only through the middle one
    assert not squares_overlap(dets[0], dets[2])
    out = merge_overlapping(dets)
    assert len(out) == 1
    x = (0.9 * 0.0 + 0.6 * 0.3 + 0.3 * 0.6) / 1.8
    assert out[0].x == pytest.approx(x, abs=1e-12)


def test_touching_squares_do_not_merge():
    assert len(merge_overlapping([_det(0, 0), _det(0.4, 0)])) == 2


def _random_dets(seed, n=25):
    rng = np.random.default_rng(seed)
    return [_det(*rng.uniform(0, 3, 2), rng.uniform(0.1, 0.6), rng.uniform(0.6, 1.0)) for _ in range(n)]


def _no_overlaps(items):
    return not any(squares_overlap(a, b) for a, b in itertools.combinations(items, 2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_merge_leaves_no_overlap_and_is_idempotent(seed):
    once = merge_overlapping(_random_dets(seed))
    assert _no_overlaps(once)
    twice = merge_overlapping(once)
    assert [(p.x, p.y, p.width) for p in twice] == [(p.x, p.y, p.width) for p in once]


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(5))))
def test_merge_within_component_is_order_insensitive(order):
    dets = [_det(0.15 * k, 0.05 * k, 0.4, 0.5 + 0.1 * k) for k in range(5)]
    ref = merge_overlapping(dets)
    got = merge_overlapping([dets[k] for k in order])
    assert len(ref) == len(got) == 1
    assert got[0].x == pytest.approx(ref[0].x, abs=1e-9)
    assert got[0].y == pytest.approx(ref[0].y, abs=1e-9)
    assert got[0].width == pytest.approx(ref[0].width, abs=1e-9)


def test_merge_weights_accumulate():
    a = merge_overlapping([_det(0, 0, score=1.0), _det(0.1, 0, score=1.0)])
    b = merge_overlapping(a + [PoleLandmark(0.3, 0, 0.4, 1.0)])
    # two earlier observations outweigh the new one two to one
    assert b[0].x == pytest.approx((2 * 0.05 + 0.3) / 3)


# ---------------------------------------------------------------- sliding window

def _lm(seg, *xs):
    return LocalMapResult(seg, [_det(x, 0.0) for x in xs], (-10, -10, 10, 10))


def test_window_keeps_persistent_pole():
    hist = [_lm(0, 1.0), _lm(1, 1.0), _lm(2, 1.0)]
    assert len(sliding_window_filter(hist, 2, 3)) == 1


def test_window_drops_transient():
    hist = [_lm(0), _lm(1), _lm(2, 1.0)]
    assert sliding_window_filter(hist, 2, 3) == []


def test_window_rejects_bad_parameters():
    with pytest.raises(ValueError):
        sliding_window_filter([_lm(0, 1.0)], 4, 3)
    with pytest.raises(ValueError):
        sliding_window_filter([_lm(0, 1.0)], 0, 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=3, max_size=3), min_size=1, max_size=8),
       st.integers(1, 5))
def test_window_matches_counting_oracle(pattern, c):
    xs = [0.0, 2.0, 4.0]
    hist = [_lm(k, *[x for x, on in zip(xs, row) if on]) for k, row in enumerate(pattern)]
    w = 5
    kept = sliding_window_filter(hist, c, w)
    window = pattern[-w:]
    expect = [xs[p] for p in range(3) if window[-1][p] and sum(r[p] for r in window) >= c]
    assert [d.x for d in kept] == expect


# ---------------------------------------------------------------- landmark map

def test_nearest_matches_linear_scan():
    rng = np.random.default_rng(1)
    lm = LandmarkMap([PoleLandmark(x, y, 0.2, 0.8) for x, y in rng.uniform(0, 50, (60, 2))])
    pts = rng.uniform(-5, 55, (500, 2))
    d, i = lm.nearest(pts)
    d_ref, i_ref = nearest_linear(pts, lm.centers)
    np.testing.assert_allclose(d, d_ref, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(i, i_ref)
    with pytest.raises(ValueError):
        LandmarkMap().nearest(pts)


def test_local_grid_snaps_to_global_raster():
    p = MappingParams()
    for c in [(3.33, -7.01), (100.05, 49.97)]:
        geo = local_geometry(c, p)
        k = np.asarray(geo.origin[:2]) / p.spacing
        np.testing.assert_allclose(k, np.round(k), atol=1e-9)
        assert abs(geo.origin[0] + 0.5 * geo.dims[0] * p.spacing - c[0]) <= p.spacing


# ---------------------------------------------------------------- end to end

def _loop_world(n_poles=10, laps=2):
    route = rounded_rectangle(30.0, 20.0, 5.0, center=(0.0, 0.0))
    route = np.vstack([route] * laps)
    traj = sample_path(route, 5.0, 10.0)
    rng = np.random.default_rng(3)
    # poles a few metres outside the loop, each inside one voxel column
    ang = np.linspace(0, 2 * np.pi, n_poles, endpoint=False) + 0.2
    xy = np.column_stack([19.0 * np.cos(ang), 14.0 * np.sin(ang)])
    xy = (np.floor(xy / 0.2) + 0.5) * 0.2
    poles = np.column_stack([xy, np.full(n_poles, 0.14), rng.uniform(3, 5, n_poles)])
    return WorldModel(poles), traj


SENSOR = SensorModel(n_azimuth=1440, range_noise=0.0)


@pytest.fixture(scope="module")
def loop_map():
    world, traj = _loop_world()
    run = simulate_run(world, SENSOR, traj, seed=1)
    return world, traj, run, build_global_map(run.scans("map"), traj)


def test_loop_visiting_poles_twice_gives_one_landmark_each(loop_map):
    world, _, _, lm = loop_map
    assert len(lm) == len(world.poles)
    d, idx = nearest_linear(lm.centers, world.poles[:, :2])
    assert sorted(idx.tolist()) == list(range(len(world.poles)))
    assert d.max() <= 0.1


def test_passing_object_is_filtered(loop_map):
    from poleloc.simulator import DynamicObject
    world, traj, _, _ = loop_map
    # a pedestrian walks across the route once, in view for a single segment
    t = traj.times[len(traj) // 4]
    x, y = traj.poses[len(traj) // 4, :2]
    walker = DynamicObject(0.4, 0.4, 1.8, [[t - 0.2, x + 3.0, y - 0.3], [t + 0.2, x + 3.0, y + 0.3]])
    busy = WorldModel(world.poles, dynamic=[walker])
    run = simulate_run(busy, SENSOR, traj, seed=1)
    lm = build_global_map(run.scans("map"), traj, MappingParams(c=2, w=3))
    assert len(lm) == len(world.poles)


def test_empty_world_gives_empty_map():
    traj = sample_path(np.array([[0.0, 0.0], [6.0, 0.0]]), 5.0, 10.0)
    run = simulate_run(WorldModel(), SENSOR, traj, seed=0)
    assert len(build_global_map(run.scans("map"), traj)) == 0


def test_map_memory_bound_one_grid(loop_map):
    world, traj, run, _ = loop_map
    short = traj.slice_time(0.0, 3.0)
    seen = []
    base = live_grid_count()
    build_global_map(run.scans("map"), short, on_grid=lambda g: seen.append(live_grid_count() - base))
    assert seen and max(seen) == 1


def test_extend_map_over_same_route_adds_nothing(loop_map):
    world, traj, run, lm = loop_map
    first = traj.slice_time(0.0, traj.times[-1] / 2)
    scans = run.scans("map")
    sub = ScanList([scans[i] for i in range(len(first))])
    base = LandmarkMap(lm.landmarks, first.xy)
    out, f_map = extend_map(base, sub, first, 10.0)
    assert f_map == 0.0
    assert out.as_array().tolist() == lm.as_array().tolist()


def test_extend_map_without_distance_uses_everything(loop_map):
    world, traj, run, _ = loop_map
    first = traj.slice_time(0.0, 4.0)
    scans = run.scans("map")
    sub = ScanList([scans[i] for i in range(len(first))])
    _, f_map = extend_map(LandmarkMap([], first.xy), sub, first, 0.0)
    assert f_map == 1.0


def test_extend_map_adds_poles_along_a_spur(loop_map):
    world, traj, run, _ = loop_map
    # map only the first half lap; the rest of the loop acts as the spur
    half = traj.slice_time(0.0, traj.times[-1] / 4)
    scans = run.scans("map")
    part = build_global_map(ScanList([scans[i] for i in range(len(half))]), half)
    lap = traj.slice_time(0.0, traj.times[-1] / 2)
    out, f_map = extend_map(part, ScanList([scans[i] for i in range(len(lap))]), lap, 10.0)
    assert 0.0 < f_map < 1.0
    assert len(out) > len(part)
    d_old, _ = nearest_linear(out.centers, part.centers)
    new = out.centers[d_old > 0.3]
    assert len(new) > 0
    # new landmarks can only come from scans taken away from the mapped stretch
    far = lap.xy[nearest_linear(lap.xy, half.xy)[0] >= 10.0]
    d_far, _ = nearest_linear(new, far)
    assert np.all(d_far <= 15.0 * np.sqrt(2.0))
    d_pole, _ = nearest_linear(out.centers, world.poles[:, :2])
    assert d_pole.max() <= 0.2
