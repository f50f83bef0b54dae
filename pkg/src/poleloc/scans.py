"""Lidar scans as ray bundles."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .se2 import apply3


@dataclass
class Scan:
    """Rays sharing one timestamp; ``starts``/``ends`` are (n, 3) arrays."""

    time: float
    starts: np.ndarray
    ends: np.ndarray
    hits: np.ndarray

    def __len__(self) -> int:
        return len(self.hits)

    def transformed(self, pose) -> "Scan":
        """The scan re-expressed in the parent frame of planar ``pose``."""
        return Scan(self.time, apply3(pose, self.starts), apply3(pose, self.ends), self.hits)


class ScanList(Sequence):
    """In-memory scan sequence; exposes ``times`` like every scan source."""

    def __init__(self, scans=()):
        self._scans = list(scans)
        self.times = np.array([s.time for s in self._scans], dtype=float)

    def __len__(self) -> int:
        return len(self._scans)

    def __getitem__(self, i):
        return self._scans[i]

    @classmethod
    def from_rays(cls, times, starts, ends, hits) -> "ScanList":
        """Group flat ray records into scans by (consecutive) timestamp."""
        times = np.asarray(times, dtype=float)
        if len(times) == 0:
            return cls()
        cut = np.flatnonzero(np.diff(times) != 0) + 1
        bounds = np.concatenate([[0], cut, [len(times)]])
        return cls(Scan(float(times[a]), np.asarray(starts[a:b], dtype=float),
                        np.asarray(ends[a:b], dtype=float), np.asarray(hits[a:b], dtype=bool))
                   for a, b in zip(bounds[:-1], bounds[1:]))


def concat_rays(scans):
    """Stack the rays of several scans into (starts, ends, hits)."""
    scans = list(scans)
    if not scans:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, bool)
    return (np.concatenate([s.starts for s in scans]),
            np.concatenate([s.ends for s in scans]),
            np.concatenate([s.hits for s in scans]))
