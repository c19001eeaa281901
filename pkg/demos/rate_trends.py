"""Reproduce the qualitative rate and latency trends with a handful of seeds.

Run: python demos/rate_trends.py [seeds]
"""

import sys
from pathlib import Path

import numpy as np

from spaceris import sweeps
from spaceris.scenario import parse_config

seeds = list(range(int(sys.argv[1]) if len(sys.argv) > 1 else 3))
sc = parse_config(Path(__file__).resolve().parents[1] / "configs" / "desk.json")


def table(rows, key, value, schemes=sweeps.SCHEMES):
    keys = sorted({r[key] for r in rows})
    print(f"{'':>12s}" + "".join(f"{s:>14s}" for s in schemes))
    for k in keys:
        vals = [np.mean([r[value] for r in rows if r[key] == k and r[0] == s]) for s in schemes]
        print(f"{k:>12g}" + "".join(f"{v / 1e9:14.3f}" for v in vals))


print("mean RUE rate (Gbit/s) against slant range (m)")
table(sweeps.sweep("distance", sc, seeds=seeds).rows, 1, 3)

print("\nmean RUE rate (Gbit/s) against RIS elements")
table(sweeps.sweep("ris_elements", sc, seeds=seeds).rows, 1, 3)

print("\nmean packet latency against packet size")
rows = sweeps.sweep("packet_size", sc, seeds=seeds).rows
for size in sweeps.DEFAULT_GRIDS["packet_size"]:
    lat = np.mean([r[2] for r in rows if r[0] == size])
    print(f"  {size:10.0e} bit  {lat * 1e3:8.3f} ms")
