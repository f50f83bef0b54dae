"""On-disk formats: binary scans, CSV trajectories, odometry, maps, worlds.

Text files start with a ``# poleloc-<kind> <major>.<minor>`` line and use
``repr``-style floats so values round-trip exactly. Scan files are
little-endian binary: an 8-byte magic, a ``<HH`` version, then packed
records ``(t f64, start 3 x f32, end 3 x f32, hit u8)``.
"""

from __future__ import annotations

import math

import numpy as np

from .localization import OdometryIncrement
from .mapping import LandmarkMap, PoleLandmark
from .scans import ScanList
from .simulator import DynamicObject, WorldModel
from .trajectory import Trajectory

MAJOR, MINOR = 1, 0
SCAN_MAGIC = b"PLSCAN\x00\x01"
SCAN_RECORD = np.dtype([("t", "<f8"), ("start", "<f4", (3,)), ("end", "<f4", (3,)), ("hit", "u1")])

TRAJECTORY_COLUMNS = ("t", "x", "y", "phi")
ODOMETRY_COLUMNS = ("t", "dx", "dy", "dphi", "s_xx", "s_xy", "s_xphi", "s_yy", "s_yphi", "s_phiphi")
LANDMARK_COLUMNS = ("x", "y", "width", "score")


class FormatError(ValueError):
    """Malformed file content; the message names the file and line."""


def _fmt(v) -> str:
    return repr(float(v))


def _header(kind: str) -> str:
    return f"# poleloc-{kind} {MAJOR}.{MINOR}\n"


def _check_version(path, line: str, kind: str):
    prefix = f"# poleloc-{kind} "
    if not line.startswith(prefix):
        raise FormatError(f"{path}:1: missing '{prefix.strip()} <version>' header")
    ver = line[len(prefix):].strip()
    try:
        major = int(ver.split(".")[0])
    except ValueError:
        raise FormatError(f"{path}:1: bad version {ver!r}") from None
    if major != MAJOR:
        raise FormatError(f"{path}:1: unsupported {kind} format version {ver} (reader is {MAJOR}.x)")


def _read_lines(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None


def _write_table(path, kind, columns, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header(kind))
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_table(path, kind, columns) -> np.ndarray:
    lines = _read_lines(path)
    if not lines:
        raise FormatError(f"{path}:1: empty file")
    _check_version(path, lines[0], kind)
    if len(lines) < 2 or tuple(c.strip() for c in lines[1].split(",")) != tuple(columns):
        raise FormatError(f"{path}:2: expected column header {','.join(columns)}")
    rows = []
    for n, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(columns):
            raise FormatError(f"{path}:{n}: expected {len(columns)} fields, got {len(fields)}")
        try:
            row = [float(f) for f in fields]
        except ValueError:
            bad = next(c for c, f in zip(columns, fields) if not _is_float(f))
            raise FormatError(f"{path}:{n}: field {bad!r} is not a number") from None
        if not all(math.isfinite(v) for v in row):
            raise FormatError(f"{path}:{n}: non-finite value")
        rows.append(row)
    return np.array(rows, dtype=float).reshape(-1, len(columns))


def _is_float(s) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------- scans

def write_scans(path, scans):
    """Write every scan of ``scans`` (any sequence of Scan) as ray records."""
    with open(path, "wb") as fh:
        fh.write(SCAN_MAGIC)
        fh.write(np.array([MAJOR, MINOR], dtype="<u2").tobytes())
        for scan in scans:
            rec = np.empty(len(scan), dtype=SCAN_RECORD)
            rec["t"] = scan.time
            rec["start"] = scan.starts
            rec["end"] = scan.ends
            rec["hit"] = scan.hits
            fh.write(rec.tobytes())


def read_scans(path) -> ScanList:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None
    if data[:8] != SCAN_MAGIC:
        raise FormatError(f"{path}: not a scan file (bad magic)")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    major, minor = np.frombuffer(data[8:12], dtype="<u2")
    if major != MAJOR:
        raise FormatError(f"{path}: unsupported scan format version {major}.{minor}")
    body = data[12:]
    if len(body) % SCAN_RECORD.itemsize:
        raise FormatError(f"{path}: truncated record {len(body) // SCAN_RECORD.itemsize}")
    rec = np.frombuffer(body, dtype=SCAN_RECORD)
    if np.any(rec["hit"] > 1):
        raise FormatError(f"{path}: record {int(np.argmax(rec['hit'] > 1))}: hit flag must be 0 or 1")
    if np.any(np.diff(rec["t"]) < 0):
        raise FormatError(f"{path}: record {int(np.argmax(np.diff(rec['t']) < 0)) + 1}: "
                          "timestamps must not decrease")
    return ScanList.from_rays(rec["t"], rec["start"].astype(np.float64),
                              rec["end"].astype(np.float64), rec["hit"].astype(bool))


# ---------------------------------------------------------------- trajectories

def write_trajectory(path, traj: Trajectory):
    _write_table(path, "trajectory", TRAJECTORY_COLUMNS, np.column_stack([traj.times, traj.poses]))


def read_trajectory(path) -> Trajectory:
    arr = _read_table(path, "trajectory", TRAJECTORY_COLUMNS)
    try:
        return Trajectory(arr[:, 0], arr[:, 1:])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_odometry(path, odometry):
    iu = np.triu_indices(3)
    rows = [[o.time, *o.chi, *o.sigma[iu]] for o in odometry]
    _write_table(path, "odometry", ODOMETRY_COLUMNS, rows)


def read_odometry(path) -> list[OdometryIncrement]:
    arr = _read_table(path, "odometry", ODOMETRY_COLUMNS)
    iu = np.triu_indices(3)
    out = []
    for n, row in enumerate(arr, start=3):
        sigma = np.zeros((3, 3))
        sigma[iu] = row[4:]
        sigma = sigma + np.triu(sigma, 1).T
        if np.linalg.eigvalsh(sigma).min() < -1e-12:
            raise FormatError(f"{path}:{n}: covariance is not positive semidefinite")
        out.append(OdometryIncrement(row[1:4], sigma, row[0]))
    return out


# ---------------------------------------------------------------- maps

def write_landmarks(path, landmark_map: LandmarkMap):
    _write_table(path, "landmarks", LANDMARK_COLUMNS, landmark_map.as_array())


def read_landmarks(path) -> LandmarkMap:
    arr = _read_table(path, "landmarks", LANDMARK_COLUMNS)
    for n, row in enumerate(arr, start=3):
        if not row[2] > 0:
            raise FormatError(f"{path}:{n}: field 'width' must be positive")
    return LandmarkMap([PoleLandmark(*row) for row in arr])


# ---------------------------------------------------------------- worlds

_WORLD_SECTIONS = {
    "poles": ("x", "y", "width", "height"),
    "walls": ("x0", "y0", "x1", "y1", "height"),
    "dynamic": ("id", "width", "depth", "height", "t", "x", "y"),
}


def write_world(path, world: WorldModel):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_header("world"))
        fh.write(f"shape,{world.pole_shape}\n")
        fh.write("[poles]\n" + ",".join(_WORLD_SECTIONS["poles"]) + "\n")
        for row in world.poles:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        fh.write("[walls]\n" + ",".join(_WORLD_SECTIONS["walls"]) + "\n")
        for row in world.walls:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        fh.write("[dynamic]\n" + ",".join(_WORLD_SECTIONS["dynamic"]) + "\n")
        for k, obj in enumerate(world.dynamic):
            for wp in obj.waypoints:
                fh.write(",".join([str(k)] + [_fmt(v) for v in (obj.width, obj.depth, obj.height, *wp)])
                         + "\n")


def read_world(path) -> WorldModel:
    lines = _read_lines(path)
    if not lines:
        raise FormatError(f"{path}:1: empty file")
    _check_version(path, lines[0], "world")
    shape = "square"
    tables = {k: [] for k in _WORLD_SECTIONS}
    section = None
    expect_header = False
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("shape,"):
            shape = line.split(",", 1)[1].strip()
            continue
        if line.startswith("["):
            section = line.strip()[1:-1]
            if section not in _WORLD_SECTIONS:
                raise FormatError(f"{path}:{n}: unknown section [{section}]")
            expect_header = True
            continue
        if section is None:
            raise FormatError(f"{path}:{n}: data before any section")
        cols = _WORLD_SECTIONS[section]
        if expect_header:
            if tuple(line.split(",")) != cols:
                raise FormatError(f"{path}:{n}: expected column header {','.join(cols)}")
            expect_header = False
            continue
        fields = line.split(",")
        if len(fields) != len(cols):
            raise FormatError(f"{path}:{n}: expected {len(cols)} fields, got {len(fields)}")
        try:
            tables[section].append([float(f) for f in fields])
        except ValueError:
            raise FormatError(f"{path}:{n}: non-numeric field in [{section}]") from None
    dynamic = []
    dyn = np.array(tables["dynamic"]).reshape(-1, 7)
    for k in np.unique(dyn[:, 0]) if len(dyn) else []:
        rows = dyn[dyn[:, 0] == k]
        dynamic.append(DynamicObject(rows[0, 1], rows[0, 2], rows[0, 3], rows[:, 4:]))
    try:
        return WorldModel(np.array(tables["poles"]).reshape(-1, 4), np.array(tables["walls"]).reshape(-1, 5),
                          dynamic, shape)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- reports

def format_report(values: dict) -> str:
    out = []
    for key, value in values.items():
        out.append(f"{key}={_fmt(value)}" if isinstance(value, float) else f"{key}={value}")
    return "\n".join(out) + "\n"


def write_report(path, values: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(values))


def read_report(path) -> dict:
    out = {}
    for n, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_error_series(path, times, pos_errors, ang_errors):
    _write_table(path, "errors", ("t", "pos_error", "ang_error"),
                 np.column_stack([times, pos_errors, ang_errors]))
