"""Pole detection on occupancy grids.

A pole is a vertical stack of occupied voxels with a square footprint of
``a`` cells, laterally surrounded by a free hull ``f`` cells thick. The
detector scores every voxel for every footprint size, merges the sizes,
collapses each column to its tallest high-scoring run, and locates pole
centers as mean-shift modes of the resulting 2-D score map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .grid import (CountGrid, GridGeometry, OccupancyField, ReflectionPrior,
                   build_occupancy, estimate_prior)


@dataclass(frozen=True)
class PoleDetection:
    x: float
    y: float
    width: float
    score: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class DetectorParams:
    mu_o: float = 0.2
    a_max: int = 3
    f: int = 1
    q_min: float = 0.6
    h_min: float = 1.0
    bandwidth: float | None = None  # metres; None means one grid spacing
    prior: ReflectionPrior | None = None  # fixed prior instead of per-grid estimate


@dataclass(frozen=True)
class ScoreVolume:
    geometry: GridGeometry
    a: int
    values: np.ndarray


@dataclass(frozen=True)
class MergedVolume:
    geometry: GridGeometry
    values: np.ndarray
    width: np.ndarray  # argmax footprint size in cells


@dataclass(frozen=True)
class ScoreMap:
    """Ground-plane score raster; NaN marks columns without a pole stack."""

    geometry: GridGeometry
    scores: np.ndarray
    run_start: np.ndarray
    run_stop: np.ndarray

    @property
    def scored(self) -> np.ndarray:
        return ~np.isnan(self.scores)


def score_volume(occ: OccupancyField, a: int, f: int) -> ScoreVolume:
    """Pole score of every voxel for footprint size ``a`` and hull ``f``.

    A footprint is anchored at its lower-left cell ``k``; its score is the
    mean occupancy inside minus the maximum occupancy of the hull. A voxel
    takes the best score among the anchored footprints that contain it.
    Footprints whose hull leaves the grid are skipped; voxels with no
    admissible footprint get -1.
    """
    a, f = int(a), int(f)
    if a < 1 or f < 1:
        raise ValueError(f"a and f must be >= 1, got a={a}, f={f}")
    o = np.asarray(occ.values, dtype=np.float64)
    nx, ny, _ = o.shape
    side = a + 2 * f
    if side > nx or side > ny:
        raise ValueError(f"footprint {a} with hull {f} does not fit a {nx}x{ny} slice")

    anchored = _kernels.anchored_scores(np.ascontiguousarray(o), a, f)
    q = _kernels.containing_max(anchored, a)
    return ScoreVolume(occ.geometry, a, q)


def merge_volumes(volumes) -> MergedVolume:
    """Element-wise maximum over footprint sizes, keeping the winning size."""
    volumes = list(volumes)
    if not volumes:
        raise ValueError("no score volumes to merge")
    geo = volumes[0].geometry
    for v in volumes[1:]:
        if v.geometry != geo or v.values.shape != volumes[0].values.shape:
            raise ValueError("score volumes do not share one geometry")
    # strict comparison keeps the first (smallest listed) size on ties
    best = volumes[0].values.copy()
    width = np.full(best.shape, volumes[0].a, dtype=np.int64)
    for v in volumes[1:]:
        _kernels.merge_into(best, width, np.ascontiguousarray(v.values), v.a)
    return MergedVolume(geo, best, width)


def aggregate_columns(merged: MergedVolume, q_min: float, h_min: float) -> ScoreMap:
    """Collapse each column to the mean score of its tallest run above
    ``q_min``; runs shorter than ``h_min`` metres are dropped."""
    spacing = merged.geometry.spacing
    min_cells = int(np.ceil(h_min / spacing - 1e-9))
    score, lo, hi = _kernels.column_runs(np.ascontiguousarray(merged.values, dtype=np.float64),
                                         float(q_min), max(min_cells, 1))
    return ScoreMap(merged.geometry, score, lo, hi)


def _local_maxima(scores):
    filled = np.where(np.isnan(scores), -np.inf, scores)
    neigh = ndimage.maximum_filter(filled, size=3, mode="constant", cval=-np.inf)
    return np.argwhere(~np.isnan(scores) & (filled >= neigh))


def mean_shift(points, weights, seeds, bandwidth, tol, max_iter=100):
    """Gaussian-kernel mean shift of each seed over weighted points."""
    modes = np.array(seeds, dtype=float)
    for s in range(len(modes)):
        x = modes[s]
        for _ in range(max_iter):
            d2 = np.sum((points - x) ** 2, axis=1)
            k = weights * np.exp(-0.5 * d2 / bandwidth ** 2)
            nxt = k @ points / k.sum()
            done = np.hypot(*(nxt - x)) < tol
            x = nxt
            if done:
                break
        modes[s] = x
    return modes


def _merge_modes(modes, strength, radius):
    # single-linkage clusters of modes closer than ``radius``
    n = len(modes)
    label = np.arange(n)
    for i in range(n):
        for j in range(i + 1, n):
            if np.hypot(*(modes[i] - modes[j])) < radius and label[i] != label[j]:
                label[label == label[j]] = label[i]
    out = []
    for lab in np.unique(label):
        m = label == lab
        w = strength[m]
        out.append((w @ modes[m] / w.sum(), np.flatnonzero(m)))
    return out


def find_poles(smap: ScoreMap, volumes, bandwidth: float | None = None) -> list[PoleDetection]:
    """Locate poles as mean-shift modes of the score map.

    Seeds are the local maxima of the map (plateaus included). Modes closer
    than one grid spacing are merged. Each pole's width is the average of
    the footprint sizes, each weighted by the mean of its score volume over
    that footprint centred on the pole; its score is the mean of the
    score-map cells assigned to it.
    """
    geo = smap.geometry
    spacing = geo.spacing
    bandwidth = spacing if bandwidth is None else float(bandwidth)
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    cells = np.argwhere(smap.scored)
    if len(cells) == 0:
        return []
    origin = np.asarray(geo.origin[:2])
    centers = origin + (cells + 0.5) * spacing
    weights = smap.scores[cells[:, 0], cells[:, 1]]
    seeds = _local_maxima(smap.scores)
    seed_xy = origin + (seeds + 0.5) * spacing
    seed_score = smap.scores[seeds[:, 0], seeds[:, 1]]
    modes = mean_shift(centers, np.clip(weights, 1e-12, None), seed_xy, bandwidth,
                       1e-4 * spacing)
    clusters = _merge_modes(modes, seed_score, spacing)

    # connected blobs of scored cells; blob cells go to the nearest mode
    # among the modes seeded inside that blob
    blobs, _ = ndimage.label(smap.scored, structure=np.ones((3, 3)))
    cell_blob = blobs[cells[:, 0], cells[:, 1]]
    seed_blob = blobs[seeds[:, 0], seeds[:, 1]]
    mode_xy = np.array([c[0] for c in clusters])
    owner = np.full(len(cells), -1)
    for b in np.unique(cell_blob):
        members = np.flatnonzero(cell_blob == b)
        cand = [ci for ci, (_, idx) in enumerate(clusters) if np.any(seed_blob[idx] == b)]
        if not cand:
            continue
        d = np.linalg.norm(centers[members, None, :] - mode_xy[None, cand, :], axis=2)
        owner[members] = np.asarray(cand)[np.argmin(d, axis=1)]

    vols = sorted(volumes, key=lambda v: v.a)
    out = []
    for ci, (xy, _) in enumerate(clusters):
        mine = np.flatnonzero(owner == ci)
        if len(mine) == 0:
            continue
        score = float(np.mean(weights[mine]))
        z0 = int(smap.run_start[cells[mine, 0], cells[mine, 1]].min())
        z1 = int(smap.run_stop[cells[mine, 0], cells[mine, 1]].max())
        width = _regress_width(xy, vols, geo, z0, z1)
        out.append(PoleDetection(float(xy[0]), float(xy[1]), width, score))
    out.sort(key=lambda p: (-p.score, p.x, p.y))
    return out


def _regress_width(xy, volumes, geo, z0, z1):
    # weight of size a: mean of Q_a over the a x a footprint best centred on
    # the pole, within the stack's height; negative means count as zero
    spacing = geo.spacing
    rel = (np.asarray(xy) - np.asarray(geo.origin[:2])) / spacing
    sizes, w = [], []
    for vol in volumes:
        lo = np.round(rel - 0.5 * vol.a).astype(int)
        lo = np.clip(lo, 0, np.asarray(geo.dims[:2]) - vol.a)
        block = vol.values[lo[0]:lo[0] + vol.a, lo[1]:lo[1] + vol.a, z0:z1]
        sizes.append(vol.a * spacing)
        w.append(max(float(block.mean()), 0.0) if block.size else 0.0)
    w = np.asarray(w)
    sizes = np.asarray(sizes)
    if w.sum() <= 0:
        return float(sizes[0])
    return float(w @ sizes / w.sum())


def detect_poles(occ: OccupancyField, params: DetectorParams = DetectorParams()) -> list[PoleDetection]:
    """Score volumes -> merge -> column aggregation -> mean shift."""
    volumes = [score_volume(occ, a, params.f) for a in range(1, params.a_max + 1)]
    smap = aggregate_columns(merge_volumes(volumes), params.q_min, params.h_min)
    return find_poles(smap, volumes, params.bandwidth)


def extract_poles(starts, ends, hits, geometry: GridGeometry,
                  params: DetectorParams = DetectorParams()) -> list[PoleDetection]:
    """Full extractor: trace registered rays into a fresh grid and detect poles."""
    grid = CountGrid(geometry)
    grid.insert_many(starts, ends, hits)
    prior = params.prior if params.prior is not None else estimate_prior(grid)
    occ = build_occupancy(grid, prior, params.mu_o)
    del grid
    return detect_poles(occ, params)
