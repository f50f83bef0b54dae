from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from poleloc.grid import (CountGrid, GridGeometry, PriorEstimationError, Ray, ReflectionPrior,
                          build_occupancy, estimate_prior, insert_ray, insert_rays,
                          live_grid_count, occupancy, prior_from_moments, traversed_voxels)

from oracles import ray_counts, segment_pieces

LINE = GridGeometry((0.0, 0.0, 0.0), 1.0, (4, 1, 1))


def test_ray_ending_in_third_voxel():
    g = insert_ray(CountGrid(LINE), Ray([0.5, 0.5, 0.5], [2.5, 0.5, 0.5], True))
    assert g.hits.ravel().tolist() == [0, 0, 1, 0]
    assert g.misses.ravel().tolist() == [1, 1, 0, 0]


def test_no_return_marks_terminal_voxel_as_miss():
    g = insert_ray(CountGrid(LINE), Ray([0.5, 0.5, 0.5], [2.5, 0.5, 0.5], False))
    assert g.hits.sum() == 0
    assert g.misses.ravel().tolist() == [1, 1, 1, 0]


def test_ray_leaving_grid_records_only_misses():
    g = insert_ray(CountGrid(LINE), Ray([0.5, 0.5, 0.5], [7.0, 0.5, 0.5], True))
    assert g.hits.sum() == 0
    assert g.misses.ravel().tolist() == [1, 1, 1, 1]


def test_ray_entirely_outside_changes_nothing():
    g = insert_ray(CountGrid(LINE), Ray([0.5, 3.0, 0.5], [2.5, 3.0, 0.5], True))
    assert g.hits.sum() == 0 and g.misses.sum() == 0


def test_end_on_boundary_belongs_to_last_entered_voxel():
    g = insert_ray(CountGrid(LINE), Ray([0.5, 0.5, 0.5], [2.0, 0.5, 0.5], True))
    assert g.hits.ravel().tolist() == [0, 1, 0, 0]
    g = insert_ray(CountGrid(LINE), Ray([3.5, 0.5, 0.5], [2.0, 0.5, 0.5], True))
    assert g.hits.ravel().tolist() == [0, 0, 1, 0]


def test_degenerate_ray_rejected():
    with pytest.raises(ValueError):
        Ray([1, 1, 1], [1, 1, 1])
    with pytest.raises(ValueError):
        insert_rays(CountGrid(LINE), [[0.5, 0.5, 0.5]], [[0.5, 0.5, 0.5]], [True])


def test_diagonal_corner_crossing_skips_zero_length_voxels():
    geo = GridGeometry((0, 0, 0), 1.0, (3, 3, 1))
    vox, end = traversed_voxels(geo, Ray([0.5, 0.5, 0.5], [2.5, 2.5, 0.5]))
    assert [tuple(v) for v in vox] == [(0, 0, 0), (1, 1, 0), (2, 2, 0)]
    assert end


def _random_rays(rng, n, dims, spread=2.0):
    lo = -spread
    hi = np.asarray(dims) + spread
    a = rng.uniform(lo, hi, (n, 3))
    b = rng.uniform(lo, hi, (n, 3))
    return a, b


def test_batch_insert_matches_segment_oracle():
    rng = np.random.default_rng(5)
    dims = (5, 4, 3)
    geo = GridGeometry((0, 0, 0), 1.0, dims)
    a, b = _random_rays(rng, 300, dims)
    hits = rng.random(300) < 0.6
    g = CountGrid(geo)
    insert_rays(g, a, b, hits)
    h = np.zeros(dims, int)
    m = np.zeros(dims, int)
    for k in range(300):
        hh, mm = ray_counts(a[k], b[k], hits[k], dims)
        h += hh
        m += mm
    np.testing.assert_array_equal(g.hits, h)
    np.testing.assert_array_equal(g.misses, m)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 9, allow_nan=False), min_size=6, max_size=6))
def test_traversal_equals_oracle_property(coords):
    p0, p1 = np.array(coords[:3]), np.array(coords[3:])
    if np.linalg.norm(p1 - p0) < 1e-6:
        return
    dims = (6, 5, 4)
    geo = GridGeometry((0, 0, 0), 1.0, dims)
    vox, _ = traversed_voxels(geo, Ray(p0, p1))
    ref, _ = segment_pieces(p0, p1, dims)
    assert [tuple(v) for v in vox] == ref


def test_non_unit_spacing_and_origin():
    geo = GridGeometry((-1.0, 2.0, 0.0), 0.2, (10, 10, 5))
    g = insert_ray(CountGrid(geo), Ray([-0.9, 2.1, 0.1], [-0.3, 2.1, 0.1], True))
    # start in voxel 0, end at x index 3.5 -> voxel 3
    assert g.hits[3, 0, 0] == 1
    assert g.misses[:3, 0, 0].tolist() == [1, 1, 1]


def test_grid_centered_snaps_to_raster():
    geo = GridGeometry.centered((10.03, -4.97), (30, 30, 5), 0.2)
    assert geo.dims == (150, 150, 25)
    assert np.allclose(np.array(geo.origin[:2]) / 0.2, np.round(np.array(geo.origin[:2]) / 0.2))


def test_prior_moment_examples():
    p = prior_from_moments(0.5, 0.05)
    assert p.alpha == pytest.approx(2.0) and p.beta == pytest.approx(2.0)
    assert occupancy(0, 0, p, 0.2) == pytest.approx(0.896, abs=1e-12)


@pytest.mark.parametrize("gamma, delta", [(0.5, 0.0), (0.5, 0.25), (0.5, 0.3), (0.0, 0.01), (1.0, 0.01)])
def test_prior_rejects_degenerate_moments(gamma, delta):
    with pytest.raises(PriorEstimationError):
        prior_from_moments(gamma, delta)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.001, 0.999))
def test_prior_reproduces_moments(gamma, frac):
    delta = frac * gamma * (1 - gamma)
    p = prior_from_moments(gamma, delta)
    assert p.alpha > 0 and p.beta > 0
    assert p.mean == pytest.approx(gamma, rel=1e-9)
    assert p.variance == pytest.approx(delta, rel=1e-9)


def test_estimate_prior_uses_observed_voxels_only():
    g = CountGrid(GridGeometry((0, 0, 0), 1.0, (10, 10, 10)))
    g.hits[0, 0, 0], g.misses[0, 0, 0] = 1, 1   # rate 0.5
    g.hits[1, 0, 0], g.misses[1, 0, 0] = 1, 3   # rate 0.25
    g.hits[2, 0, 0], g.misses[2, 0, 0] = 0, 4   # rate 0
    p = estimate_prior(g)
    rates = np.array([0.5, 0.25, 0.0])
    assert p.gamma == pytest.approx(rates.mean())
    assert p.delta == pytest.approx(rates.var())


def test_estimate_prior_uniform_map_fails():
    g = CountGrid(GridGeometry((0, 0, 0), 1.0, (3, 3, 3)))
    g.misses[:] = 2
    with pytest.raises(PriorEstimationError):
        estimate_prior(g)
    with pytest.raises(PriorEstimationError):
        estimate_prior(CountGrid(GridGeometry((0, 0, 0), 1.0, (3, 3, 3))))


def test_occupancy_limits_and_monotonicity():
    p = ReflectionPrior(2.0, 2.0)
    assert occupancy(0, 0, p, 0.0) == pytest.approx(1.0)
    assert occupancy(0, 0, p, 1.0) == pytest.approx(0.0)
    o = occupancy(np.arange(10), 3, p, 0.3)
    assert np.all(np.diff(o) > 0)
    o = occupancy(3, np.arange(10), p, 0.3)
    assert np.all(np.diff(o) < 0)
    with pytest.raises(ValueError):
        occupancy(0, 0, p, 1.5)


def test_occupancy_matches_beta_survival():
    p = ReflectionPrior(0.7, 3.1)
    for h, m, mu in [(0, 0, 0.2), (3, 5, 0.4), (20, 1, 0.9)]:
        ref = stats.beta(h + p.alpha, m + p.beta).sf(mu)
        assert occupancy(h, m, p, mu) == pytest.approx(ref, abs=1e-12)
        num, _ = integrate.quad(stats.beta(h + p.alpha, m + p.beta).pdf, mu, 1.0, limit=200)
        assert occupancy(h, m, p, mu) == pytest.approx(num, abs=1e-7)


def test_build_occupancy_equals_elementwise_occupancy():
    rng = np.random.default_rng(2)
    g = CountGrid(GridGeometry((0, 0, 0), 1.0, (8, 7, 6)))
    g.hits[:] = rng.integers(0, 5, g.hits.shape)
    g.misses[:] = rng.integers(0, 9, g.misses.shape)
    p = estimate_prior(g)
    occ = build_occupancy(g, p, 0.2)
    np.testing.assert_array_equal(occ.values, occupancy(g.hits, g.misses, p, 0.2))
    # large counts take the fallback path
    g.misses[0, 0, 0] = 5_000_000
    occ = build_occupancy(g, p, 0.2)
    np.testing.assert_array_equal(occ.values, occupancy(g.hits, g.misses, p, 0.2))


def test_live_grid_hook_counts_instances():
    import gc
    gc.collect()
    before = live_grid_count()
    g = CountGrid(LINE)
    assert live_grid_count() == before + 1
    del g
    gc.collect()
    assert live_grid_count() == before
