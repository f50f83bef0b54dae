"""Pole-landmark mapping and Monte Carlo localization for lidar vehicles."""

from .grid import (CountGrid, GridGeometry, OccupancyField, PriorEstimationError, Ray,
                   ReflectionPrior, build_occupancy, estimate_prior, insert_ray, occupancy)
from .localization import (FilterParams, MeasurementParams, OdometryIncrement, ParticleSet,
                           localize_run)
from .mapping import LandmarkMap, MappingParams, PoleLandmark, build_global_map, extend_map
from .poles import DetectorParams, PoleDetection, extract_poles
from .se2 import Pose2D
from .trajectory import Trajectory

__version__ = "0.1.0"
