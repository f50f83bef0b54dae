"""Build a pole map of a simulated loop and track a second drive against it.

Usage: python demos/map_and_localize.py [seed] [route_length]

The defaults reproduce one seed of the 500 m benchmark scenario, which
takes a few minutes; pass a shorter route for a quick look.
"""

from __future__ import annotations

import sys
import time

import numpy as np

from poleloc.experiments import ScenarioSpec, build_map, localize, make_scenario, map_errors


def main(seed=0, route_length=500.0):
    spec = ScenarioSpec(route_length=route_length)
    if route_length < 500.0:
        spec = ScenarioSpec(route_length=route_length, extent=(80.0, 80.0), n_poles=12)
    t0 = time.perf_counter()
    scn = make_scenario(spec, seed)
    lm = build_map(scn)
    _, err = map_errors(scn.world, lm)
    print(f"map: {len(lm)} landmarks for {len(scn.world.poles)} poles, "
          f"median center error {np.median(err):.3f} m ({time.perf_counter() - t0:.0f} s)")

    res, rep = localize(scn, lm)
    print(f"localization: {res.n_measurements} measurement updates, {res.n_resamples} resamplings")
    print(f"  mean position error {rep.delta_pos:.3f} m, rmse {rep.rmse_pos:.3f} m")
    print(f"  mean heading error {rep.delta_ang:.3f} deg, rmse {rep.rmse_ang:.3f} deg")
    print(f"  worst position error {rep.pos_errors.max():.2f} m ({time.perf_counter() - t0:.0f} s total)")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 0, float(args[1]) if len(args) > 1 else 500.0)
