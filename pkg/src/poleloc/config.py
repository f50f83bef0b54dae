"""Pipeline configuration: flat ``section.key = value`` text files.

Every field has a default; a file only lists what it changes. Unknown keys
and out-of-range values are rejected with the offending key (and line)
named in the message.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from .localization import FilterParams, MeasurementParams
from .mapping import MappingParams
from .poles import DetectorParams
from .simulator import OdometryNoise, SensorModel, WorldSpec


class ConfigError(ValueError):
    """Malformed or out-of-range configuration entry."""


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0 <= v <= 1


@dataclass(frozen=True)
class GridSection:
    spacing: float = 0.2
    mu_o: float = 0.2
    extent_x: float = 30.0
    extent_y: float = 30.0
    extent_z: float = 5.0
    z_min: float = 0.0


@dataclass(frozen=True)
class DetectorSection:
    a_max: int = 3
    f: int = 1
    q_min: float = 0.6
    h_min: float = 1.0
    bandwidth: float = 0.0  # 0 means one grid spacing


@dataclass(frozen=True)
class MappingSection:
    segment_length: float = 1.5
    c: int = 2
    w: int = 3
    min_distance: float = 10.0


@dataclass(frozen=True)
class FilterSection:
    n_particles: int = 5000
    sigma: float = 1.0
    epsilon: float = 0.1
    inflation: float = 4.0
    resample_ratio: float = 0.5
    top_fraction: float = 0.1
    init_radius: float = 2.5
    init_heading_deg: float = 5.0
    composition: str = "right"
    segment_length: float = 1.5
    c: int = 2
    w: int = 3


@dataclass(frozen=True)
class SimSection:
    extent_x: float = 200.0
    extent_y: float = 200.0
    n_poles: int = 40
    min_separation: float = 4.0
    n_dynamic: int = 0
    route: str = "loop"  # loop | figure8
    route_length: float = 500.0
    speed: float = 2.5
    range_noise: float = 0.02
    n_azimuth: int = 1440
    max_range: float = 30.0
    odom_xy: float = 0.02
    odom_phi_deg: float = 0.2


_RULES = {
    "grid.spacing": (_positive, "must be > 0"),
    "grid.mu_o": (_unit, "must lie in [0, 1]"),
    "grid.extent_x": (_positive, "must be > 0"),
    "grid.extent_y": (_positive, "must be > 0"),
    "grid.extent_z": (_positive, "must be > 0"),
    "detector.a_max": (lambda v: v >= 1, "must be >= 1"),
    "detector.f": (lambda v: v >= 1, "must be >= 1"),
    "detector.q_min": (lambda v: -1 <= v <= 1, "must lie in [-1, 1]"),
    "detector.h_min": (_positive, "must be > 0"),
    "detector.bandwidth": (_nonneg, "must be >= 0"),
    "mapping.segment_length": (_positive, "must be > 0"),
    "mapping.c": (lambda v: v >= 1, "must be >= 1"),
    "mapping.w": (lambda v: v >= 1, "must be >= 1"),
    "mapping.min_distance": (_nonneg, "must be >= 0"),
    "filter.n_particles": (lambda v: v >= 1, "must be >= 1"),
    "filter.sigma": (_positive, "must be > 0"),
    "filter.epsilon": (_nonneg, "must be >= 0"),
    "filter.inflation": (_nonneg, "must be >= 0"),
    "filter.resample_ratio": (_unit, "must lie in [0, 1]"),
    "filter.top_fraction": (lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "filter.init_radius": (_nonneg, "must be >= 0"),
    "filter.init_heading_deg": (lambda v: 0 <= v <= 180, "must lie in [0, 180]"),
    "filter.composition": (lambda v: v in ("right", "left"), "must be 'right' or 'left'"),
    "filter.segment_length": (_positive, "must be > 0"),
    "filter.c": (lambda v: v >= 1, "must be >= 1"),
    "filter.w": (lambda v: v >= 1, "must be >= 1"),
    "sim.extent_x": (_positive, "must be > 0"),
    "sim.extent_y": (_positive, "must be > 0"),
    "sim.n_poles": (_nonneg, "must be >= 0"),
    "sim.min_separation": (_nonneg, "must be >= 0"),
    "sim.n_dynamic": (_nonneg, "must be >= 0"),
    "sim.route": (lambda v: v in ("loop", "figure8"), "must be 'loop' or 'figure8'"),
    "sim.route_length": (_positive, "must be > 0"),
    "sim.speed": (_positive, "must be > 0"),
    "sim.range_noise": (_nonneg, "must be >= 0"),
    "sim.n_azimuth": (lambda v: v >= 1, "must be >= 1"),
    "sim.max_range": (_positive, "must be > 0"),
    "sim.odom_xy": (_nonneg, "must be >= 0"),
    "sim.odom_phi_deg": (_nonneg, "must be >= 0"),
}


@dataclass(frozen=True)
class PipelineConfig:
    grid: GridSection = field(default_factory=GridSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    mapping: MappingSection = field(default_factory=MappingSection)
    filter: FilterSection = field(default_factory=FilterSection)
    sim: SimSection = field(default_factory=SimSection)
    seed: int = 0

    def __post_init__(self):
        for key, value in self.items():
            rule = _RULES.get(key)
            if rule is not None and not rule[0](value):
                raise ConfigError(f"{key} = {value!r}: {rule[1]}")
            if isinstance(value, float) and not math.isfinite(value):
                raise ConfigError(f"{key} = {value!r}: must be finite")
        for sec in ("mapping", "filter"):
            s = getattr(self, sec)
            if s.c > s.w:
                raise ConfigError(f"{sec}.c = {s.c}: must not exceed {sec}.w = {s.w}")

    def items(self):
        """(dotted key, value) pairs in a fixed order."""
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                for g in dataclasses.fields(value):
                    yield f"{f.name}.{g.name}", getattr(value, g.name)
            else:
                yield f.name, value

    # -- derived parameter bundles

    def detector_params(self) -> DetectorParams:
        d = self.detector
        return DetectorParams(mu_o=self.grid.mu_o, a_max=d.a_max, f=d.f, q_min=d.q_min,
                              h_min=d.h_min, bandwidth=d.bandwidth or None)

    def mapping_params(self) -> MappingParams:
        g, m = self.grid, self.mapping
        return MappingParams(spacing=g.spacing, extent=(g.extent_x, g.extent_y, g.extent_z),
                             z_min=g.z_min, segment_length=m.segment_length, c=m.c, w=m.w,
                             detector=self.detector_params())

    def filter_params(self) -> FilterParams:
        g, f = self.grid, self.filter
        return FilterParams(
            n_particles=f.n_particles, measurement=MeasurementParams(f.sigma, f.epsilon),
            inflation=f.inflation, resample_ratio=f.resample_ratio, top_fraction=f.top_fraction,
            init_radius=f.init_radius, init_heading=math.radians(f.init_heading_deg),
            composition=f.composition, segment_length=f.segment_length, c=f.c, w=f.w,
            spacing=g.spacing, extent=(g.extent_x, g.extent_y, g.extent_z), z_min=g.z_min,
            detector=self.detector_params())

    def sensor_model(self) -> SensorModel:
        s = self.sim
        return SensorModel(n_azimuth=s.n_azimuth, max_range=s.max_range, range_noise=s.range_noise)

    def odometry_noise(self) -> OdometryNoise:
        s = self.sim
        return OdometryNoise(s.odom_xy, s.odom_xy, math.radians(s.odom_phi_deg))

    def world_spec(self, route=None) -> WorldSpec:
        s = self.sim
        return WorldSpec(extent=(s.extent_x, s.extent_y), n_poles=s.n_poles,
                         min_separation=s.min_separation, n_dynamic=s.n_dynamic, route=route)

    def with_updates(self, **dotted) -> "PipelineConfig":
        """Copy with ``section__key=value`` (or ``seed=...``) overrides."""
        return from_entries({k.replace("__", "."): v for k, v in dotted.items()}, base=self)


def _coerce(key, raw, target_type, line=None):
    where = f"line {line}: " if line is not None else ""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{where}{key}: cannot parse {text!r} as {target_type.__name__}") from None
    return text


def _field_types(cls):
    hints = {"float": float, "int": int, "str": str}
    return {f.name: hints.get(f.type, f.type) for f in dataclasses.fields(cls)}


def from_entries(entries, base: PipelineConfig | None = None, lines=None) -> PipelineConfig:
    """Build a config from a ``{dotted key: value}`` mapping."""
    base = base or PipelineConfig()
    sections = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    updates: dict = {}
    top = {"seed": int}
    for key, raw in entries.items():
        line = None if lines is None else lines.get(key)
        where = f"line {line}: " if line is not None else ""
        if key in top:
            sections[key] = _coerce(key, raw, top[key], line)
            continue
        sec, _, name = key.partition(".")
        if sec not in sections or not dataclasses.is_dataclass(sections[sec]):
            raise ConfigError(f"{where}unknown config section in {key!r}")
        types = _field_types(type(sections[sec]))
        if name not in types:
            raise ConfigError(f"{where}unknown config key {key!r}")
        updates.setdefault(sec, {})[name] = _coerce(key, raw, types[name], line)
    for sec, vals in updates.items():
        sections[sec] = dataclasses.replace(sections[sec], **vals)
    return PipelineConfig(**sections)


def parse_config(text: str) -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    entries, lines = {}, {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in entries:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        entries[key], lines[key] = value, n
    return from_entries(entries, lines=lines)


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: PipelineConfig) -> str:
    out = []
    for key, value in cfg.items():
        out.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(out) + "\n"
