"""Global pole maps built segment by segment.

The mapping trajectory is cut into equal-length segments. Scans of each
segment go into one local grid, axis-aligned and snapped to the global
raster; detected poles pass a c-of-w sliding-window test against the
previous local maps and are then merged into the global map wherever
their ground-plane squares overlap existing landmarks.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .grid import CountGrid, GridGeometry, PriorEstimationError, build_occupancy, estimate_prior
from .poles import DetectorParams, PoleDetection, detect_poles
from .trajectory import Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoleLandmark:
    x: float
    y: float
    width: float
    score: float
    weight: float | None = None  # accumulated merge weight, defaults to score

    def __post_init__(self):
        if self.weight is None:
            object.__setattr__(self, "weight", float(self.score))

    @classmethod
    def from_detection(cls, d: PoleDetection) -> "PoleLandmark":
        return cls(d.x, d.y, d.width, d.score)


class LandmarkMap:
    """Pole landmarks with a 2-D nearest-neighbour index over their centers."""

    def __init__(self, landmarks=(), visited=None):
        self.landmarks = [lm if isinstance(lm, PoleLandmark) else PoleLandmark.from_detection(lm)
                          for lm in landmarks]
        self.visited = np.zeros((0, 2)) if visited is None else np.asarray(visited, float).reshape(-1, 2)
        self._tree = None

    def __len__(self) -> int:
        return len(self.landmarks)

    def __iter__(self):
        return iter(self.landmarks)

    @property
    def centers(self) -> np.ndarray:
        return np.array([[lm.x, lm.y] for lm in self.landmarks]).reshape(-1, 2)

    @property
    def widths(self) -> np.ndarray:
        return np.array([lm.width for lm in self.landmarks])

    def as_array(self) -> np.ndarray:
        """(n, 4) array of x, y, width, score."""
        return np.array([[lm.x, lm.y, lm.width, lm.score] for lm in self.landmarks]).reshape(-1, 4)

    def nearest(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the nearest landmark to each point."""
        if not self.landmarks:
            raise ValueError("nearest-neighbour query on an empty landmark map")
        if self._tree is None:
            self._tree = cKDTree(self.centers)
        return self._tree.query(np.asarray(points, dtype=float))


@dataclass
class TrajectorySegment:
    index: int
    times: np.ndarray
    poses: np.ndarray
    arc_length: float
    scan_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def midpoint(self) -> np.ndarray:
        """Pose halfway along the segment's arc length."""
        return Trajectory(*_dedup(self.times, self.poses)).at_arc_length(0.5 * self.arc_length)[1]


def _dedup(times, poses):
    keep = np.concatenate([[True], np.diff(times) > 0])
    return times[keep], poses[keep]


@dataclass(frozen=True)
class LocalMapResult:
    segment: int
    detections: list
    footprint: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax


@dataclass(frozen=True)
class MappingParams:
    spacing: float = 0.2
    extent: tuple[float, float, float] = (30.0, 30.0, 5.0)
    z_min: float = 0.0
    segment_length: float = 1.5
    c: int = 2
    w: int = 3
    detector: DetectorParams = DetectorParams()


def segment_trajectory(trajectory: Trajectory, segment_length: float,
                       scan_times=None) -> list[TrajectorySegment]:
    """Cut ``trajectory`` into consecutive pieces of ``segment_length`` metres
    of arc (the last one may be shorter). Boundary poses are interpolated so
    the pieces tile the path exactly. Scans are assigned by timestamp."""
    if not segment_length > 0:
        raise ValueError(f"segment_length must be positive, got {segment_length}")
    if len(trajectory) < 2:
        raise ValueError("trajectory needs at least two poses")
    arc = trajectory.arc_length()
    total = arc[-1]
    if not total > 0:
        raise ValueError("trajectory has zero arc length")
    n_seg = max(1, int(np.ceil(total / segment_length - 1e-9)))
    bounds = np.minimum(np.arange(n_seg + 1) * segment_length, total)
    bounds[-1] = total
    b_times, b_poses = trajectory.at_arc_length(bounds)
    scan_times = None if scan_times is None else np.asarray(scan_times, dtype=float)

    segments = []
    for k in range(n_seg):
        inner = (arc > bounds[k]) & (arc < bounds[k + 1])
        times = np.concatenate([[b_times[k]], trajectory.times[inner], [b_times[k + 1]]])
        poses = np.vstack([b_poses[k], trajectory.poses[inner], b_poses[k + 1]])
        length = float(np.sum(np.hypot(*np.diff(poses[:, :2], axis=0).T)))
        if scan_times is not None:
            last = k == n_seg - 1
            m = (scan_times >= times[0]) & ((scan_times <= times[-1]) if last else (scan_times < times[-1]))
            idx = np.flatnonzero(m)
        else:
            idx = np.zeros(0, np.int64)
        segments.append(TrajectorySegment(k, times, poses, length, idx))
    return segments


def squares_overlap(a, b) -> bool:
    """Whether the ground-plane squares (side = width) of two poles overlap."""
    reach = 0.5 * (a.width + b.width)
    return abs(a.x - b.x) < reach and abs(a.y - b.y) < reach


def _overlap_pairs(xy, widths):
    if len(xy) < 2:
        return np.zeros((0, 2), np.int64)
    pairs = cKDTree(xy).query_pairs(r=float(widths.max()), p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return pairs
    reach = 0.5 * (widths[pairs[:, 0]] + widths[pairs[:, 1]])
    d = np.abs(xy[pairs[:, 0]] - xy[pairs[:, 1]])
    return pairs[(d[:, 0] < reach) & (d[:, 1] < reach)]


def _components(n, pairs):
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return np.array([find(i) for i in range(n)])


def merge_overlapping(detections) -> list[PoleLandmark]:
    """Collapse every connected group of overlapping pole squares into one
    landmark with weighted mean center and width. Repeats until no two
    squares overlap. Isolated poles pass through unchanged."""
    items = [d if isinstance(d, PoleLandmark) else PoleLandmark.from_detection(d) for d in detections]
    while True:
        if not items:
            return []
        arr = np.array([[p.x, p.y, p.width, p.score, p.weight] for p in items])
        pairs = _overlap_pairs(arr[:, :2], arr[:, 2])
        if len(pairs) == 0:
            return items
        labels = _components(len(items), pairs)
        merged = []
        for lab in np.unique(labels):
            idx = np.flatnonzero(labels == lab)
            if len(idx) == 1:
                merged.append(items[idx[0]])
                continue
            wt = arr[idx, 4]
            tot = wt.sum()
            x, y, width, score = (wt @ arr[idx, :4]) / tot
            merged.append(PoleLandmark(float(x), float(y), float(width), float(score), float(tot)))
        items = merged


def sliding_window_filter(history, c: int, w: int) -> list:
    """Detections of the newest local map seen in at least ``c`` of the
    last ``w`` local maps (the newest one included)."""
    c, w = int(c), int(w)
    if not 1 <= c <= w:
        raise ValueError(f"sliding window needs 1 <= c <= w, got c={c}, w={w}")
    history = list(history)
    if not history:
        return []
    window = history[-w:]
    newest = window[-1]
    keep = []
    for det in newest.detections:
        seen = 1 + sum(any(squares_overlap(det, o) for o in lm.detections) for lm in window[:-1])
        if seen >= c:
            keep.append(det)
    return keep


def local_geometry(center_xy, params: MappingParams) -> GridGeometry:
    return GridGeometry.centered(center_xy, params.extent, params.spacing, params.z_min)


def build_local_map(scans, geometry: GridGeometry, detector: DetectorParams,
                    segment: int = 0, on_grid=None) -> LocalMapResult:
    """Trace the given (registered) scans into one grid and detect poles."""
    grid = CountGrid(geometry)
    n_rays = 0
    for scan in scans:
        grid.insert_many(scan.starts, scan.ends, scan.hits)
        n_rays += len(scan)
    if on_grid is not None:
        on_grid(grid)
    lo = np.asarray(geometry.origin[:2])
    hi = geometry.upper[:2]
    footprint = (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
    try:
        prior = detector.prior if detector.prior is not None else estimate_prior(grid)
    except PriorEstimationError as exc:
        log.warning("local map %d skipped (%d rays): %s", segment, n_rays, exc)
        return LocalMapResult(segment, [], footprint)
    occ = build_occupancy(grid, prior, detector.mu_o)
    del grid
    return LocalMapResult(segment, detect_poles(occ, detector), footprint)


class MapBuilder:
    """Incremental global map construction, one local map at a time."""

    def __init__(self, params: MappingParams = MappingParams(), landmark_map: LandmarkMap | None = None):
        self.params = params
        self.map = landmark_map if landmark_map is not None else LandmarkMap()
        self.history: deque = deque(maxlen=params.w)
        self.local_maps: list[LocalMapResult] = []

    def add_segment(self, scans, center_xy, segment: int = 0, on_grid=None) -> LocalMapResult:
        geo = local_geometry(center_xy, self.params)
        result = build_local_map(scans, geo, self.params.detector, segment, on_grid)
        self.local_maps.append(result)
        self.history.append(result)
        accepted = sliding_window_filter(self.history, self.params.c, self.params.w)
        if accepted:
            self.map = LandmarkMap(merge_overlapping(self.map.landmarks + [
                PoleLandmark.from_detection(d) for d in accepted]), self.map.visited)
        return result


def build_global_map(scans, trajectory: Trajectory, params: MappingParams = MappingParams(),
                     on_grid=None) -> LandmarkMap:
    """Landmark map from scans registered in the map frame.

    ``scans`` is any sequence of :class:`~poleloc.scans.Scan` exposing a
    ``times`` array. ``on_grid`` is called with each live local grid (an
    instrumentation hook; at most one grid exists at a time).
    """
    builder = MapBuilder(params)
    for seg in segment_trajectory(trajectory, params.segment_length, scans.times):
        builder.add_segment((scans[i] for i in seg.scan_indices), seg.midpoint()[:2],
                            seg.index, on_grid)
    builder.map.visited = trajectory.xy.copy()
    return builder.map


def extend_map(landmark_map: LandmarkMap, scans, trajectory: Trajectory, min_distance: float,
               params: MappingParams = MappingParams(), on_grid=None) -> tuple[LandmarkMap, float]:
    """Add landmarks seen from poses at least ``min_distance`` away from every
    pose visited while building ``landmark_map``.

    Returns the extended map and the fraction of scans that contributed.
    """
    n_total = len(scans)
    if n_total == 0:
        return landmark_map, 0.0
    poses = trajectory.interpolate(np.clip(scans.times, trajectory.times[0], trajectory.times[-1]))
    if len(landmark_map.visited) and min_distance > 0:
        dist, _ = cKDTree(landmark_map.visited).query(poses[:, :2])
        usable = dist >= min_distance
    else:
        usable = np.ones(n_total, bool)
    builder = MapBuilder(params, LandmarkMap(landmark_map.landmarks, landmark_map.visited))
    for seg in segment_trajectory(trajectory, params.segment_length, scans.times):
        idx = seg.scan_indices[usable[seg.scan_indices]]
        if len(idx) == 0:
            continue
        builder.add_segment((scans[i] for i in idx), seg.midpoint()[:2], seg.index, on_grid)
    out = builder.map
    out.visited = np.vstack([landmark_map.visited, trajectory.xy])
    return out, float(usable.sum()) / n_total
