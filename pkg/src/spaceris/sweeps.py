"""Parameter sweeps behind the rate, latency and batch-size tables."""

from __future__ import annotations

import copy
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from . import mappo
from .geometry import local_projection, subsatellite_point
from .bcd import hyper_from, woa_hyper
from .netsim import Packet, RoutingWorld, TrafficConfig, measure_latency
from .results import ResultTable
from .scenario import Scenario, from_dict, to_dict, with_overrides
from .system import SystemModel, offset_point

log = logging.getLogger(__name__)

SCHEMES = ("ris", "nonris", "fairness_p")
KINDS = ("distance", "ris_elements", "packet_size", "batch_size")

DEFAULT_GRIDS = {
    "distance": [500e3, 700e3, 900e3, 1100e3, 1300e3, 1500e3],
    "ris_elements": [4, 8, 16, 32],
    "packet_size": [1e5, 1e6, 1e7, 1e8],
    "batch_size": [8, 16, 32, 64],
}

TABLE_OF = {"distance": "rate_vs_distance", "ris_elements": "rate_vs_nr",
            "packet_size": "latency_vs_size", "batch_size": "reward_vs_batch"}


# -- geometry helpers -----------------------------------------------------------

def central_angle_for_range(slant_m: float, altitude_m: float, earth_radius_m: float) -> float:
    """Earth-centre angle between a ground point and a satellite at slant range ``slant_m``."""
    rs = earth_radius_m + altitude_m
    c = (earth_radius_m**2 + rs**2 - slant_m**2) / (2.0 * earth_radius_m * rs)
    if not -1.0 <= c <= 1.0:
        raise ValueError(f"slant range {slant_m:g} m is not reachable from altitude {altitude_m:g} m")
    return math.acos(c)


def relocate_rues(system: SystemModel, slant_m: float, slot: int = 0) -> SystemModel:
    """Copy of ``system`` with every RUE moved to slant range ``slant_m`` of its serving satellite.

    Each RUE keeps its bearing from the sub-satellite point; the association is unchanged.
    """
    pos = system.constellation.state(slot).positions
    re = system.consts.earth_radius_m
    new = np.array(system.rue_pos, dtype=float)
    for u in range(system.num_rues):
        s = system.assoc.satellite_of(u)
        sub = subsatellite_point(pos[s], system.consts)
        east, north = local_projection(system.rue_pos[u], sub)[0]
        bearing = math.atan2(east, north) if (east or north) else 0.0
        alt = float(np.linalg.norm(pos[s])) - re
        theta = central_angle_for_range(slant_m, alt, re)
        new[u] = offset_point(sub, theta * re, bearing, system.consts)
    out = copy.copy(system)
    out.rue_pos = new
    out._link_cache = {}
    return out


# -- per-scheme evaluation ----------------------------------------------------------

def scheme_rates(system: SystemModel, scheme: str, slots: Sequence[int],
                 rng: np.random.Generator) -> np.ndarray:
    """Per-(RUE, slot) rates of a scheme on BFS routes with coherent phases.

    ``ris`` optimizes power with WOA, ``nonris`` does the same with a
    one-element surface, ``fairness_p`` splits power evenly.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "nonris" and not system.nonris:
        system = copy.copy(system)
        system.nonris = True
        system._link_cache = {}
    paths = system.bfs_paths()
    k, active = system.kappa(paths, slots, "coherent")
    prob = system.power_problem(k, active)
    if scheme == "fairness_p":
        power = prob.uniform()
    else:
        power = prob.solve(woa_hyper(system), rng, init=prob.uniform()[None, :]).best
    rates = prob.rates(power)
    rates[~active] = np.nan
    return rates


def _mean(rates: np.ndarray) -> float:
    vals = rates[np.isfinite(rates)]
    return float(vals.mean()) if vals.size else 0.0


def _seed_rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


# -- one seed of each sweep ----------------------------------------------------------

def _distance_rows(sc: Scenario, grid, seed: int) -> list[tuple]:
    base = SystemModel(sc)
    rows = []
    for i, d in enumerate(grid):
        moved = relocate_rues(base, float(d))
        for j, scheme in enumerate(SCHEMES):
            r = scheme_rates(moved, scheme, [0], _seed_rng(seed, 1, i, j))
            rows.append((scheme, float(d), seed, _mean(r)))
    return rows


def _nr_rows(sc: Scenario, grid, seed: int) -> list[tuple]:
    rows = []
    slots = list(range(sc.episode_slots))
    for i, n in enumerate(grid):
        system = SystemModel(with_overrides(sc, **{"ris.num_elements": int(n)}))
        for j, scheme in enumerate(SCHEMES):
            r = scheme_rates(system, scheme, slots, _seed_rng(seed, 2, i, j))
            rows.append((scheme, int(n), seed, _mean(r)))
    return rows


def _latency_rows(sc: Scenario, grid, seed: int) -> list[tuple]:
    system = SystemModel(sc)
    rates = scheme_rates(system, "fairness_p", [0], _seed_rng(seed, 3))
    down = np.nan_to_num(rates[:, 0], nan=0.0)
    serving = {u: system.assoc.satellite_of(u) for u in range(system.num_rues)}
    rows = []
    for size in grid:
        traffic = TrafficConfig(packet_size_bits=float(size), psi_max_s=math.inf, arrival_rate=0.0,
                                link_rate_bps=sc.traffic.link_rate_bps)
        world = RoutingWorld(system.constellation, system.gbs_pos, system.rue_pos, system.min_elev, traffic,
                             serving_sat=serving, rue_rate_bps=list(down), freeze_topology=True,
                             consts=system.consts)
        world.inject([Packet(id=0, source_gbs=system.assoc.gbs_of(u), dest_rue=u, size_bits=float(size),
                             created_slot=0) for u in range(system.num_rues)])
        for _ in range(sc.mappo.routing_max_steps + 1):
            live = world.active_packets()
            if not live:
                break
            world.step({p.id: world.oracle_action(p) for p in live})
        done = [p for p in world.packets if p.delivered_slot is not None]
        lat = float(measure_latency(done, consts=system.consts).mean()) if done else math.inf
        rows.append((float(size), seed, lat, len(done)))
    return rows


def _batch_rows(sc: Scenario, grid, seed: int, steps: int = 5000) -> list[tuple]:
    system = SystemModel(sc)
    path = system.bfs_paths()[0]
    link = system.slot_link(path, 0)
    cas = system.cascade(link, path.rue, 0)
    env = mappo.PhaseEnv(cas, link.budget, [system.num_elements] * len(path.sats))
    rows = []
    base = hyper_from(system)
    for i, mb in enumerate(grid):
        hyper = dataclasses.replace(base, minibatch=int(mb))
        res = mappo.train(env, None, hyper, steps, _seed_rng(seed, 4, i))
        rows.append((int(mb), seed, mappo.evaluate_phase(env, res.agents["PS"])))
    return rows


_RUNNERS = {"distance": _distance_rows, "ris_elements": _nr_rows,
            "packet_size": _latency_rows, "batch_size": _batch_rows}


def _job(args):
    kind, sc_dict, grid, seed = args
    sc = from_dict({**sc_dict, "seed": seed})
    return _RUNNERS[kind](sc, grid, seed)


def sweep(kind: str, scenario: Scenario, grid=None, seeds: Sequence[int] | None = None,
          workers: int = 1) -> ResultTable:
    """Run one sweep over ``grid`` for each seed; rows come back in seed order."""
    if kind not in KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}; expected one of {KINDS}")
    grid = list(DEFAULT_GRIDS[kind] if grid is None else grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    seeds = [scenario.seed] if seeds is None else list(seeds)
    jobs = [(kind, to_dict(scenario), grid, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_job, jobs))
    else:
        chunks = [_job(j) for j in jobs]
    return ResultTable(TABLE_OF[kind], [row for chunk in chunks for row in chunk])


# -- trend statistics ----------------------------------------------------------------

def sign_test(diffs: Sequence[float]) -> float:
    """One-sided sign-test p-value that the differences are positive; ties are dropped."""
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0]
    if d.size == 0:
        return 1.0
    return float(binomtest(int(np.sum(d > 0)), int(d.size), 0.5, alternative="greater").pvalue)


def by_seed(rows, key_col: int, value_col: int, filt=None) -> dict[int, dict]:
    """{seed: {grid value: metric}} from sweep rows (seed is the column before the metric)."""
    out: dict[int, dict] = {}
    for r in rows:
        if filt is not None and not filt(r):
            continue
        out.setdefault(int(r[value_col - 1]), {})[r[key_col]] = float(r[value_col])
    return out
