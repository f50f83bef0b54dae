"""Ray-traced voxel grids and Beta-posterior occupancy.

A :class:`CountGrid` accumulates, per voxel, how often a laser ray ended
in it (hits) and how often a ray passed through it (misses). The counts
define a Beta posterior over the voxel's reflection rate; integrating that
posterior above a threshold gives the occupancy probability.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels

_live_grids: "weakref.WeakSet[CountGrid]" = weakref.WeakSet()


def live_grid_count() -> int:
    """Number of :class:`CountGrid` objects currently alive (memory hook)."""
    return len(_live_grids)


class PriorEstimationError(ValueError):
    """The maximum-likelihood reflection map admits no Beta prior."""


@dataclass(frozen=True)
class Ray:
    """One laser measurement from ``start`` to ``end`` (map frame, metres).

    ``hit`` is False for max-range beams that returned nothing.
    """

    start: np.ndarray
    end: np.ndarray
    hit: bool = True

    def __post_init__(self):
        start = np.asarray(self.start, dtype=float).reshape(3)
        end = np.asarray(self.end, dtype=float).reshape(3)
        if np.array_equal(start, end):
            raise ValueError("degenerate ray: start and end coincide")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "hit", bool(self.hit))


@dataclass(frozen=True)
class GridGeometry:
    """Axis-aligned raster: ``origin`` is the min corner of voxel (0, 0, 0)."""

    origin: tuple[float, float, float]
    spacing: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(v) for v in np.asarray(self.origin, dtype=float).reshape(3))
        dims = tuple(int(v) for v in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", float(self.spacing))

    @classmethod
    def centered(cls, center_xy, extent, spacing, z_min=0.0) -> "GridGeometry":
        """Grid of physical size ``extent`` (x, y, z) whose horizontal center
        is ``center_xy`` snapped to the global raster of the given spacing."""
        dims = tuple(int(round(e / spacing)) for e in extent)
        cx, cy = (np.round(np.asarray(center_xy, dtype=float) / spacing)).astype(np.int64)
        ox = (cx - dims[0] // 2) * spacing
        oy = (cy - dims[1] // 2) * spacing
        return cls((ox, oy, z_min), spacing, dims)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * np.asarray(self.dims)

    def world_to_index(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.floor((p - np.asarray(self.origin)) / self.spacing).astype(np.int64)

    def index_to_world(self, index) -> np.ndarray:
        """Voxel center(s) for integer index array(s)."""
        idx = np.asarray(index, dtype=float)
        return np.asarray(self.origin) + (idx + 0.5) * self.spacing

    def contains_index(self, index) -> np.ndarray:
        idx = np.asarray(index)
        return np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=-1)

    def contains_point(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all((p >= np.asarray(self.origin)) & (p <= self.upper), axis=-1)


class CountGrid:
    """Per-voxel hit and miss counters over a :class:`GridGeometry`."""

    def __init__(self, geometry: GridGeometry):
        self.geometry = geometry
        self.hits = np.zeros(geometry.dims, dtype=np.uint32)
        self.misses = np.zeros(geometry.dims, dtype=np.uint32)
        _live_grids.add(self)

    @property
    def observed(self) -> np.ndarray:
        return (self.hits > 0) | (self.misses > 0)

    def insert(self, ray: Ray) -> "CountGrid":
        return insert_ray(self, ray)

    def insert_many(self, starts, ends, hits) -> int:
        return insert_rays(self, starts, ends, hits)


def insert_ray(grid: CountGrid, ray: Ray) -> CountGrid:
    """Trace one ray through ``grid`` in place and return the grid.

    Voxels crossed before the terminal voxel collect a miss. The voxel that
    holds the end point (the last one entered, if the end lies on a
    boundary) collects a hit for returns and a miss for no-returns. Parts
    of the ray outside the grid are ignored.
    """
    if not isinstance(ray, Ray):
        ray = Ray(*ray)
    insert_rays(grid, ray.start[None], ray.end[None], np.array([ray.hit]))
    return grid


def insert_rays(grid: CountGrid, starts, ends, hits) -> int:
    """Vectorised :func:`insert_ray`; returns the number of recorded hits."""
    starts = np.ascontiguousarray(starts, dtype=np.float64).reshape(-1, 3)
    ends = np.ascontiguousarray(ends, dtype=np.float64).reshape(-1, 3)
    hits = np.ascontiguousarray(hits, dtype=np.bool_).reshape(-1)
    if not (len(starts) == len(ends) == len(hits)):
        raise ValueError("starts, ends and hits must have equal length")
    if len(starts) == 0:
        return 0
    if np.any(np.all(starts == ends, axis=1)):
        raise ValueError("degenerate ray: start and end coincide")
    geo = grid.geometry
    return int(_kernels.insert_rays(starts, ends, hits, np.asarray(geo.origin),
                                    geo.spacing, grid.hits, grid.misses))


def traversed_voxels(geometry: GridGeometry, ray: Ray) -> tuple[np.ndarray, bool]:
    """Voxel indices visited by ``ray`` in order, plus whether the last one
    holds the ray's end point."""
    origin = np.asarray(geometry.origin)
    p0 = (ray.start - origin) / geometry.spacing
    p1 = (ray.end - origin) / geometry.spacing
    dims = np.asarray(geometry.dims, dtype=np.int64)
    buf = np.empty((int(dims.sum()) + 3, 3), dtype=np.int64)
    n, terminal = _kernels.traverse(p0, p1, dims, buf)
    return buf[:n].copy(), bool(terminal)


@dataclass(frozen=True)
class ReflectionPrior:
    """Beta(alpha, beta) prior on voxel reflection rates, together with the
    mean and variance of the maximum-likelihood map it was fitted to."""

    alpha: float
    beta: float
    gamma: float = field(default=float("nan"))
    delta: float = field(default=float("nan"))

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))


def prior_from_moments(gamma: float, delta: float) -> ReflectionPrior:
    """Beta parameters with mean ``gamma`` and variance ``delta``."""
    if not 0.0 < gamma < 1.0:
        raise PriorEstimationError(f"mean of reflection map must lie in (0, 1), got {gamma}")
    if not delta > 0.0:
        raise PriorEstimationError("reflection map has zero variance")
    if delta >= gamma * (1.0 - gamma):
        raise PriorEstimationError(
            f"variance {delta} >= gamma*(1-gamma) = {gamma * (1 - gamma)}: no Beta prior fits")
    alpha = -gamma * (gamma * gamma - gamma + delta) / delta
    beta = (gamma - delta + gamma * delta - 2.0 * gamma * gamma + gamma ** 3) / delta
    return ReflectionPrior(alpha, beta, gamma, delta)


def ml_reflection_map(grid: CountGrid) -> np.ndarray:
    """Reflection rates h / (h + m) of all observed voxels (flat array)."""
    h = grid.hits.astype(np.float64)
    total = h + grid.misses
    mask = total > 0
    return h[mask] / total[mask]


def estimate_prior(grid: CountGrid) -> ReflectionPrior:
    """Fit the reflection prior to the ML reflection map of ``grid``.

    Only observed voxels enter the mean and variance.
    """
    m = ml_reflection_map(grid)
    if m.size < 2:
        raise PriorEstimationError("need at least two observed voxels to estimate the prior")
    return prior_from_moments(float(m.mean()), float(m.var()))


def occupancy(h, m, prior: ReflectionPrior, mu_o: float):
    """Probability that the reflection rate exceeds ``mu_o`` given ``h``
    hits and ``m`` misses. Broadcasts over array inputs."""
    if not 0.0 <= mu_o <= 1.0:
        raise ValueError(f"mu_o must lie in [0, 1], got {mu_o}")
    a = np.asarray(h, dtype=np.float64) + prior.alpha
    b = np.asarray(m, dtype=np.float64) + prior.beta
    out = special.betaincc(a, b, mu_o)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class OccupancyField:
    geometry: GridGeometry
    values: np.ndarray


def build_occupancy(grid: CountGrid, prior: ReflectionPrior, mu_o: float) -> OccupancyField:
    """Voxel-wise occupancy probabilities of a count grid."""
    # counts repeat heavily; evaluate the incomplete beta once per (h, m) pair
    h, m = grid.hits, grid.misses
    hmax, mmax = int(h.max()), int(m.max())
    if (hmax + 1) * (mmax + 1) <= 1 << 22:
        present = np.zeros((hmax + 1, mmax + 1), dtype=bool)
        present[h, m] = True
        ph, pm = np.nonzero(present)
        table = np.zeros(present.shape)
        table[ph, pm] = occupancy(ph, pm, prior, mu_o)
        return OccupancyField(grid.geometry, table[h, m])
    key = (h.astype(np.uint64) << np.uint64(32)) | m.astype(np.uint64)
    uniq, inverse = np.unique(key.ravel(), return_inverse=True)
    table = np.atleast_1d(occupancy((uniq >> np.uint64(32)).astype(np.float64),
                                    (uniq & np.uint64(0xFFFFFFFF)).astype(np.float64), prior, mu_o))
    return OccupancyField(grid.geometry, table[inverse].reshape(grid.geometry.dims))
