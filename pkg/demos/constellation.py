"""Build the desk constellation, cluster the RUEs and show who serves whom.

Run: python demos/constellation.py
"""

import math
from pathlib import Path

import numpy as np

from spaceris.geometry import coverage, orbital_period, slots_per_revolution
from spaceris.scenario import parse_config
from spaceris.system import SystemModel

sc = parse_config(Path(__file__).resolve().parents[1] / "configs" / "desk.json")
system = SystemModel(sc)
plane = system.constellation.planes[0]

beta, area = coverage(plane, system.min_elev)
print(f"orbit period {orbital_period(plane):.1f} s, {slots_per_revolution(plane)} slots per revolution")
print(f"coverage half-angle {math.degrees(beta):.3f} deg, footprint {area / 1e12:.3f} million km^2\n")

state = system.constellation.state(0)
print(f"{state.positions.shape[0]} satellites; ISL neighbours at slot 0:")
for sat, nbrs in sorted(state.adjacency().items()):
    print(f"  {sat:2d} -> {sorted(nbrs)}")

print("\nassociation (balanced clusters, one satellite per cluster):")
pos = state.positions
for u in range(system.num_rues):
    s = system.assoc.satellite_of(u)
    d = np.linalg.norm(pos[s] - system.rue_pos[u]) / 1e3
    print(f"  RUE {u}: GBS {system.assoc.gbs_of(u)} -> sat {s:2d}  ({d:7.1f} km slant)")

print("\nBFS routes from each GBS uplink to the serving satellite:")
for p in system.bfs_paths():
    print(f"  RUE {p.rue}: GBS {p.gbs} via {p.sats}")
