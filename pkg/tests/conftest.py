import math
from pathlib import Path

import numpy as np
import pytest

from spaceris.geometry import Constellation, subsatellite_point, walker_planes

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
MIN_ELEV = math.radians(12)


def grid_constellation(planes=3, sats=4):
    return Constellation(walker_planes(planes, sats, 500e3, math.radians(53), 0, math.radians(30)))


def ground_under(constellation, nodes, slot=0):
    pos = constellation.state(slot).positions
    return np.array([subsatellite_point(pos[n]) for n in nodes])


@pytest.fixture
def grid():
    return grid_constellation()


def random_power_problem(rng, links=4, rues=8, gbs=2, r_min=0.0):
    rue_link = np.concatenate([np.arange(links), rng.integers(0, links, rues - links)])
    return rue_link, dict(
        kappa=10 ** rng.uniform(0, 3, size=(rues, 2)),
        rue_link=rue_link,
        link_gbs=np.arange(links) % gbs,
        bandwidth_hz=1e9,
        p_max_w=1.0,
        r_min_bps=r_min,
    )


@pytest.fixture(scope="session")
def smoke():
    from spaceris.scenario import parse_config
    return parse_config(CONFIGS / "smoke.json")
