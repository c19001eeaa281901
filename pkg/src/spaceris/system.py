"""The assembled network: constellation, ground actors, association, paths and per-slot channels."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import channel as ch
from .association import associate
from .constants import DEFAULT_CONSTANTS, GeoConstants
from .geometry import (Constellation, elevation_angle, ground_point, points_in_disk, subsatellite_point,
                       walker_planes)
from .netsim import bfs_path
from .scenario import Scenario
from .woa import PowerProblem


def offset_point(center: np.ndarray, distance_m: float, bearing_rad: float,
                 consts: GeoConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Ground point ``distance_m`` along the great circle leaving ``center`` at ``bearing_rad``."""
    c = np.asarray(center, float)
    up = c / np.linalg.norm(c)
    east = np.cross([0.0, 0.0, 1.0], up)
    if np.linalg.norm(east) < 1e-12:
        east = np.array([0.0, 1.0, 0.0])
    east /= np.linalg.norm(east)
    north = np.cross(up, east)
    ang = distance_m / consts.earth_radius_m
    heading = math.sin(bearing_rad) * east + math.cos(bearing_rad) * north
    return consts.earth_radius_m * (math.cos(ang) * up + math.sin(ang) * heading)


def off_nadir(sat_pos, target) -> float:
    """Angle at the satellite between nadir and the direction to ``target``."""
    s = np.asarray(sat_pos, float)
    v = np.asarray(target, float) - s
    cosang = float(np.dot(-s, v) / (np.linalg.norm(s) * np.linalg.norm(v)))
    return math.acos(min(1.0, max(-1.0, cosang)))


@dataclass
class RuePath:
    rue: int
    gbs: int
    sats: list[int]  # uplink satellite first, serving satellite last


@dataclass
class SlotLink:
    """Everything needed to evaluate one RUE in one slot."""

    budget: ch.LinkBudget
    los_hops: list[np.ndarray]
    los_terminal: np.ndarray
    covered: bool


class SystemModel:
    """Deterministic geometry and channel model built from a :class:`Scenario`.

    ``nonris`` replaces every RIS by a single unit-amplitude element, both in
    the budget array factor and in the cascade.
    """

    def __init__(self, scenario: Scenario, nonris: bool = False):
        self.sc = scenario
        self.nonris = nonris
        self.consts = replace(DEFAULT_CONSTANTS, slot_seconds=scenario.slot_s)
        c = scenario.constellation
        self.constellation = Constellation(
            walker_planes(c.num_planes, c.sats_per_plane, c.altitude_m, math.radians(c.inclination_deg),
                          c.phasing, math.radians(c.raan_spread_deg)), self.consts)
        self.min_elev = math.radians(c.min_elev_deg)
        ch_cfg = scenario.channel
        self.loss_cfg = ch.LossConfig(
            fc_hz=ch_cfg.fc_hz, kappa_abs_per_m=ch_cfg.kappa_abs_per_m,
            rain=ch.RainConfig(**vars(ch_cfg.rain)), cloud=ch.CloudConfig(**vars(ch_cfg.cloud)),
            plasma=ch.PlasmaConfig(**vars(ch_cfg.plasma)), temperature_K=ch_cfg.temperature_K,
            pressure_Pa=ch_cfg.pressure_Pa, atmosphere_height_m=ch_cfg.atmosphere_height_m)
        self.wavelength = self.loss_cfg.wavelength(self.consts)
        self.noise_w = 10 ** ((ch_cfg.noise_psd_dbm_hz - 30.0) / 10.0)
        rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, 0xA0]))
        self.aoi_center = self._aoi_center()
        self.rue_pos = self._place_rues(rng)
        self.gbs_pos = self._place_gbs()
        self.assoc, self.clusters, self.cluster_sats = associate(
            self.rue_pos, self.constellation.state(0).positions, self.gbs_pos, self.min_elev,
            consts=self.consts)
        self._link_cache: dict = {}

    # -- placement --------------------------------------------------------------
    def _aoi_center(self) -> np.ndarray:
        a = self.sc.actors
        if a.aoi_lat_deg is not None:
            return ground_point(math.radians(a.aoi_lat_deg), math.radians(a.aoi_lon_deg), self.consts)
        # under the first satellite of the middle plane at slot 0
        state = self.constellation.state(0)
        plane = state.num_planes // 2
        return subsatellite_point(state.positions[state.node(plane, 0)], self.consts)

    def _place_rues(self, rng) -> np.ndarray:
        a = self.sc.actors
        if a.rue_positions_deg is not None:
            return np.array([ground_point(math.radians(la), math.radians(lo), self.consts)
                             for la, lo in a.rue_positions_deg])
        n = a.num_rues
        if a.hppp_intensity_per_km2 is not None:
            area_km2 = math.pi * (a.aoi_radius_m / 1e3) ** 2
            n = max(1, int(rng.poisson(a.hppp_intensity_per_km2 * area_km2)))
        return points_in_disk(rng, n, self.aoi_center, a.aoi_radius_m, self.consts)

    def _place_gbs(self) -> np.ndarray:
        a = self.sc.actors
        if a.gbs_positions_deg is not None:
            return np.array([ground_point(math.radians(la), math.radians(lo), self.consts)
                             for la, lo in a.gbs_positions_deg])
        # evenly spread bearings starting from gbs_bearing_deg
        first = math.radians(a.gbs_bearing_deg)
        return np.array([offset_point(self.aoi_center, a.gbs_distance_m, first + 2.0 * math.pi * b / a.num_gbs,
                                      self.consts) for b in range(a.num_gbs)])

    @property
    def num_rues(self) -> int:
        return len(self.rue_pos)

    @property
    def num_elements(self) -> int:
        return 1 if self.nonris else self.sc.ris.num_elements

    @property
    def amplitude(self) -> float:
        return 1.0 if self.nonris else self.sc.ris.amplitude

    def cluster_size(self, rue: int) -> int:
        s = self.assoc.satellite_of(rue)
        return int(sum(1 for u in range(self.num_rues) if self.assoc.satellite_of(u) == s))

    def bandwidth(self, rue: int) -> float:
        """Each satellite's band is split evenly between the RUEs it serves."""
        return self.sc.channel.bandwidth_hz / self.cluster_size(rue)

    # -- paths --------------------------------------------------------------------
    def uplink_satellite(self, gbs: int, serving: int, slot: int = 0) -> int:
        pos = self.constellation.state(slot).positions
        elev = np.array([elevation_angle(self.gbs_pos[gbs], p, self.consts) for p in pos])
        visible = elev >= self.min_elev
        if visible[serving]:
            return serving
        dist = np.linalg.norm(pos - self.gbs_pos[gbs], axis=1)
        return int(np.argmin(np.where(visible, dist, np.inf) if visible.any() else dist))

    def bfs_paths(self, slot: int = 0) -> list[RuePath]:
        """Hop-shortest satellite path from each RUE's GBS to its serving satellite."""
        adj = self.constellation.state(slot).adjacency()
        out = []
        for u in range(self.num_rues):
            s, b = self.assoc.satellite_of(u), self.assoc.gbs_of(u)
            up = self.uplink_satellite(b, s, slot)
            out.append(RuePath(u, b, bfs_path(adj, up, s)))
        return out

    # -- per-slot links -------------------------------------------------------------
    def slot_link(self, path: RuePath, slot: int) -> SlotLink:
        key = (path.rue, path.gbs, tuple(path.sats), slot)
        if key in self._link_cache:
            return self._link_cache[key]
        sc, cfg = self.sc, self.sc.channel
        pos = self.constellation.state(slot).positions
        sats = [pos[s] for s in path.sats]
        gbs, rue = self.gbs_pos[path.gbs], self.rue_pos[path.rue]
        covered = elevation_angle(rue, sats[-1], self.consts) >= self.min_elev
        d_bs = float(np.linalg.norm(sats[0] - gbs))
        d_ss = [float(np.linalg.norm(b - a)) for a, b in zip(sats[:-1], sats[1:])]
        d_su = float(np.linalg.norm(rue - sats[-1]))
        e_b = max(elevation_angle(gbs, sats[0], self.consts), 1e-3)
        e_u = max(elevation_angle(rue, sats[-1], self.consts), 1e-3)
        h_atm = self.loss_cfg.atmosphere_height_m
        f_bs = ch.nrp(off_nadir(sats[0], gbs))
        f_su = ch.nrp(off_nadir(sats[-1], rue))
        n = self.num_elements
        size = sc.ris.element_size_m
        budget = ch.total_loss(
            self.loss_cfg, d_bs, d_ss or None, d_su,
            gbs_gain=10 ** (cfg.gbs_gain_dbi / 10.0), rue_gain=10 ** (cfg.rue_gain_dbi / 10.0),
            num_elements=n, element_size_m=(size, size), amplitude=self.amplitude,
            nrp_factors=[f_bs, 1.0, 1.0, 1.0, f_su],
            absorption_path_m=h_atm / math.sin(e_b) + h_atm / math.sin(e_u), consts=self.consts)
        k = cfg.gbs_antennas
        lam = self.wavelength
        gbs_off = ch.ula_offsets(k, lam / 2.0, gbs / np.linalg.norm(gbs))
        panels = [ch.panel_offsets(n, (size, size), -p / np.linalg.norm(p)) for p in sats]
        hops = [ch.los_hop(sats[0], panels[0], gbs, gbs_off, lam) / math.sqrt(n * k)]
        for r in range(1, len(sats)):
            hops.append(ch.los_hop(sats[r], panels[r], sats[r - 1], panels[r - 1], lam) / n)
        term = ch.los_hop(rue, np.zeros((1, 3)), sats[-1], panels[-1], lam)[0] / math.sqrt(n)
        link = SlotLink(budget, hops, term, bool(covered))
        self._link_cache[key] = link
        return link

    def cascade(self, link: SlotLink, rue: int, slot: int) -> ch.CascadeChannel:
        """Rician realization, reproducible per (seed, slot, RUE)."""
        rng = np.random.default_rng(np.random.SeedSequence([self.sc.seed, slot, rue]))
        cfg = self.sc.channel
        return ch.sample_cascade(link.los_hops, link.los_terminal, cfg.rician_K_H, cfg.rician_K_g, rng)

    def panels_for(self, cascade: ch.CascadeChannel, mode: str, phases=None) -> list[ch.RisPanel]:
        n, amp = self.num_elements, self.amplitude
        size = (self.sc.ris.element_size_m, self.sc.ris.element_size_m)
        r = len(cascade.hops)
        if mode == "coherent":
            ph = ch.coherent_phases(cascade.hops, cascade.terminal)
        elif mode == "zero":
            ph = [np.zeros(n)] * r
        elif mode == "given":
            flat = np.asarray(phases, float)
            if flat.size != n * r:
                raise ValueError(f"expected {n * r} phases, got {flat.size}")
            ph = [flat[i * n:(i + 1) * n] for i in range(r)]
        else:
            raise ValueError(f"unknown phase mode {mode!r}")
        return [ch.RisPanel(n, amp, size, p) for p in ph]

    def snr_per_watt(self, path: RuePath, slot: int, mode: str = "coherent", phases=None) -> float:
        link = self.slot_link(path, slot)
        if not link.covered:
            return 0.0
        cas = self.cascade(link, path.rue, slot)
        panels = self.panels_for(cas, mode, phases)
        return ch.snr(cas, panels, link.budget, 1.0, noise_w=self.noise_w * self.bandwidth(path.rue))

    def kappa(self, paths: Sequence[RuePath], slots: Sequence[int], mode: str = "coherent",
              phase_fn=None) -> tuple[np.ndarray, np.ndarray]:
        """SNR per watt ``[U, T]`` and the coverage mask.

        ``phase_fn(rue, slot, link, cascade)`` supplies phases for ``mode='given'``.
        """
        k = np.zeros((self.num_rues, len(slots)))
        active = np.zeros_like(k, dtype=bool)
        for j, t in enumerate(slots):
            for p in paths:
                link = self.slot_link(p, t)
                if not link.covered:
                    continue
                active[p.rue, j] = True
                cas = self.cascade(link, p.rue, t)
                ph = phase_fn(p.rue, t, link, cas) if mode == "given" else None
                panels = self.panels_for(cas, mode, ph)
                k[p.rue, j] = ch.snr(cas, panels, link.budget, 1.0,
                                     noise_w=self.noise_w * self.bandwidth(p.rue))
        return k, active

    # -- power ---------------------------------------------------------------------
    def links(self) -> tuple[np.ndarray, np.ndarray]:
        """(link index per RUE, GBS per link); a link is one (GBS, serving satellite) pair."""
        pairs = sorted({(self.assoc.gbs_of(u), self.assoc.satellite_of(u)) for u in range(self.num_rues)})
        index = {p: i for i, p in enumerate(pairs)}
        rue_link = np.array([index[(self.assoc.gbs_of(u), self.assoc.satellite_of(u))]
                             for u in range(self.num_rues)])
        return rue_link, np.array([b for b, _ in pairs])

    def power_problem(self, kappa: np.ndarray, active: np.ndarray | None = None,
                      r_min_bps: float | None = None) -> PowerProblem:
        rue_link, link_gbs = self.links()
        bw = np.array([self.bandwidth(u) for u in range(self.num_rues)])
        return PowerProblem(kappa=kappa, rue_link=rue_link, link_gbs=link_gbs, bandwidth_hz=bw,
                            p_max_w=self.sc.actors.p_max_w,
                            r_min_bps=self.sc.woa.r_min_bps if r_min_bps is None else r_min_bps,
                            active=active)
