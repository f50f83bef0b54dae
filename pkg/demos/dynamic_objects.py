"""Show how the c-of-w sliding window drops moving objects from the map.

Usage: python demos/dynamic_objects.py [seed]

Builds the map of a world with pedestrians crossing the route once with
c=1, w=1 (every detection kept) and once with the default c=2, w=3.
"""

from __future__ import annotations

import sys
from dataclasses import replace

import numpy as np

from poleloc.experiments import ScenarioSpec, build_map, make_scenario
from poleloc.mapping import MappingParams


def _off_pole(world, lm, radius=0.5):
    if len(lm) == 0:
        return 0
    d = np.hypot(*(lm.centers[:, None, :] - world.poles[None, :, :2]).transpose(2, 0, 1))
    return int(np.sum(d.min(axis=1) > radius))


def main(seed=0):
    spec = ScenarioSpec(route_length=150.0, extent=(80.0, 80.0), n_poles=12, n_dynamic=5)
    scn = make_scenario(spec, seed)
    base = MappingParams()
    for c, w in [(1, 1), (base.c, base.w)]:
        lm = build_map(scn, replace(base, c=c, w=w))
        print(f"c={c}, w={w}: {len(lm)} landmarks, {_off_pole(scn.world, lm)} not on a static pole")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
