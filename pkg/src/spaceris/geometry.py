"""Circular-orbit constellation geometry.

Satellite positions are Earth-centred Cartesian coordinates (metres) with
Earth rotation neglected, so ground points are fixed vectors on a sphere
of radius ``R_e``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .constants import DEFAULT_CONSTANTS, GeoConstants

log = logging.getLogger(__name__)

FORE, AFT, LEFT, RIGHT = 0, 1, 2, 3


class GeometryError(ValueError):
    """Inputs that cannot describe a point above a spherical Earth."""


class DegenerateGeometryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OrbitalPlane:
    inclination_rad: float
    raan_rad: float
    sats: int
    altitude_m: float
    phase_offset_rad: float = 0.0

    def __post_init__(self):
        if not self.altitude_m > 0:
            raise ValueError("altitude_m must be > 0")
        if not 0.0 <= self.inclination_rad <= math.pi:
            raise ValueError("inclination_rad must lie in [0, pi]")
        if self.sats < 1:
            raise ValueError("a plane needs at least one satellite")

    def initial_anomaly(self, sat_index: int) -> float:
        return self.phase_offset_rad + 2.0 * math.pi * sat_index / self.sats


def orbit_radius(plane: OrbitalPlane, consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
    return plane.altitude_m + consts.earth_radius_m


def orbital_period(plane: OrbitalPlane, consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
    a = orbit_radius(plane, consts)
    return 2.0 * math.pi * a**1.5 / math.sqrt(consts.mu)


def slots_per_revolution(plane: OrbitalPlane, consts: GeoConstants = DEFAULT_CONSTANTS) -> int:
    """Number of ``slot_seconds`` slots in one revolution, rounded, at least 1."""
    return max(1, round(orbital_period(plane, consts) / consts.slot_seconds))


def anomaly(plane: OrbitalPlane, sat_index: int, slot: int,
            consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
    t_s = slots_per_revolution(plane, consts)
    return plane.initial_anomaly(sat_index) + 2.0 * math.pi * (slot % t_s) / t_s


def position_from_angles(radius: float, inclination: float, raan: float, chi: float) -> np.ndarray:
    cx, sx = math.cos(chi), math.sin(chi)
    cw, sw = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inclination), math.sin(inclination)
    return radius * np.array([
        cx * cw - sx * ci * sw,
        cx * sw + sx * ci * cw,
        sx * si,
    ])


def sat_position(plane: OrbitalPlane, sat_index: int, slot: int,
                 consts: GeoConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Earth-centred position of satellite ``sat_index`` of ``plane`` at ``slot``.

    The anomaly advances by ``2*pi/T_s`` per slot, so positions repeat
    exactly every ``slots_per_revolution`` slots.
    """
    if not 0 <= sat_index < plane.sats:
        raise IndexError(f"sat_index {sat_index} outside plane of {plane.sats}")
    if slot < 0:
        raise ValueError("slot must be >= 0")
    chi = anomaly(plane, sat_index, slot, consts)
    return position_from_angles(orbit_radius(plane, consts), plane.inclination_rad,
                                plane.raan_rad, chi)


def walker_planes(num_planes: int, sats_per_plane: int, altitude_m: float,
                  inclination_rad: float, phasing: int = 1,
                  raan_spread_rad: float = 2.0 * math.pi) -> list[OrbitalPlane]:
    """Walker-delta layout: ascending nodes spread over ``raan_spread_rad``, phase offset ``phasing``.

    A spread below 2*pi gives a regional cluster of planes.
    """
    planes = []
    for m in range(num_planes):
        planes.append(OrbitalPlane(
            inclination_rad=inclination_rad,
            raan_rad=raan_spread_rad * m / num_planes,
            sats=sats_per_plane,
            altitude_m=altitude_m,
            phase_offset_rad=2.0 * math.pi * phasing * m / (num_planes * sats_per_plane),
        ))
    return planes


@dataclass(frozen=True)
class ConstellationState:
    """Snapshot of every satellite at one slot.

    ``neighbors[i]`` holds node ids for (fore, aft, left, right), ``-1``
    where the link does not exist.
    """

    epoch_slot: int
    positions: np.ndarray
    anomalies_rad: np.ndarray
    plane_of: np.ndarray
    index_in_plane: np.ndarray
    neighbors: np.ndarray
    plane_sizes: tuple[int, ...] = field(default=())

    @property
    def num_sats(self) -> int:
        return len(self.positions)

    @property
    def num_planes(self) -> int:
        return len(self.plane_sizes)

    def node(self, plane: int, index: int) -> int:
        return int(sum(self.plane_sizes[:plane]) + index)

    def adjacency(self) -> dict[int, list[int]]:
        adj = {}
        for i, row in enumerate(self.neighbors):
            adj[i] = sorted({int(j) for j in row if j >= 0 and j != i})
        return adj


def isl_neighbors(plane_sizes: Sequence[int]) -> np.ndarray:
    """+grid wiring: fore/aft on the ring, left/right to the nearest index of adjacent planes."""
    offsets = np.concatenate([[0], np.cumsum(plane_sizes)]).astype(int)
    total = int(offsets[-1])
    nbrs = -np.ones((total, 4), dtype=int)
    for m, size in enumerate(plane_sizes):
        for k in range(size):
            i = offsets[m] + k
            if size >= 2:
                nbrs[i, FORE] = offsets[m] + (k + 1) % size
                nbrs[i, AFT] = offsets[m] + (k - 1) % size
            for col, other in ((LEFT, m - 1), (RIGHT, m + 1)):
                if 0 <= other < len(plane_sizes):
                    other_size = plane_sizes[other]
                    j = int(round(k * other_size / size)) % other_size
                    nbrs[i, col] = offsets[other] + j
    return nbrs


class Constellation:
    """A set of orbital planes with cached per-slot snapshots."""

    def __init__(self, planes: Sequence[OrbitalPlane], consts: GeoConstants = DEFAULT_CONSTANTS):
        if not planes:
            raise ValueError("constellation needs at least one plane")
        self.planes = list(planes)
        self.consts = consts
        self.plane_sizes = tuple(p.sats for p in self.planes)
        self._neighbors = isl_neighbors(self.plane_sizes)
        self._cache: dict[int, ConstellationState] = {}

    @property
    def num_sats(self) -> int:
        return sum(self.plane_sizes)

    def state(self, slot: int) -> ConstellationState:
        if slot not in self._cache:
            pos, chis, plane_of, idx = [], [], [], []
            for m, plane in enumerate(self.planes):
                for k in range(plane.sats):
                    pos.append(sat_position(plane, k, slot, self.consts))
                    chis.append(anomaly(plane, k, slot, self.consts))
                    plane_of.append(m)
                    idx.append(k)
            self._cache[slot] = ConstellationState(
                epoch_slot=slot,
                positions=np.array(pos),
                anomalies_rad=np.array(chis),
                plane_of=np.array(plane_of),
                index_in_plane=np.array(idx),
                neighbors=self._neighbors,
                plane_sizes=self.plane_sizes,
            )
        return self._cache[slot]

    def altitude(self, node: int) -> float:
        m = int(np.searchsorted(np.cumsum(self.plane_sizes), node, side="right"))
        return self.planes[m].altitude_m


# -- distances and angles ---------------------------------------------------

def slant_range(elev_rad: float, altitude_m: float,
                consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
    """Ground-to-satellite distance for elevation ``elev_rad``.

    Evaluates ``sqrt(R^2 sin^2 a + h^2 + 2hR) - R sin a`` in a
    cancellation-free form.
    """
    r_e = consts.earth_radius_m
    s = math.sin(elev_rad)
    q = altitude_m * (altitude_m + 2.0 * r_e)
    return q / (math.sqrt((r_e * s) ** 2 + q) + r_e * s)


def isl_distance(pos_a, pos_b) -> float:
    """Satellite-satellite distance by the law of cosines on the Earth-central angle."""
    a = np.asarray(pos_a, dtype=float)
    b = np.asarray(pos_b, dtype=float)
    ra, rb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    # central angle from atan2 stays accurate for tiny separations
    delta = math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))
    return chord_length(ra, rb, delta)


def chord_length(ra: float, rb: float, delta: float) -> float:
    # ra^2 + rb^2 - 2 ra rb cos(delta), rewritten to avoid cancellation
    d2 = (ra - rb) ** 2 + 4.0 * ra * rb * math.sin(delta / 2.0) ** 2
    return math.sqrt(d2)


def link_distance(kind: str, a, b, consts: GeoConstants = DEFAULT_CONSTANTS,
                  altitude_m: float | None = None) -> float:
    """Distance of a ``sat-sat``, ``gbs-sat`` or ``sat-rue`` link.

    For the ground kinds ``b`` may be an elevation angle (radians), in
    which case ``a`` is ignored and ``altitude_m`` is required; otherwise
    both are positions.
    """
    if kind == "sat-sat":
        d = isl_distance(a, b)
    elif kind in ("gbs-sat", "sat-rue"):
        if np.ndim(b) == 0:
            if altitude_m is None:
                raise ValueError("altitude_m is required for the elevation form")
            return slant_range(float(b), altitude_m, consts)
        d = float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))
    else:
        raise ValueError(f"unknown link kind {kind!r}")
    if d == 0.0:
        warnings.warn(f"{kind} link of zero length", DegenerateGeometryWarning, stacklevel=2)
    return d


def elevation_from_range(d: float, altitude_m: float,
                         consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
    """Elevation of a satellite at altitude ``altitude_m`` seen at slant range ``d``.

    Same value as ``arccos((R^2 + d^2 - (R+h)^2) / (2 R d)) - pi/2``,
    computed as an ``atan2`` of the vertical and horizontal components so
    that the overhead case stays accurate.
    """
    r_e = consts.earth_radius_m
    r_s = r_e + altitude_m
    if d <= 0:
        raise GeometryError("slant range must be positive")
    vertical = (altitude_m * (2.0 * r_e + altitude_m) - d * d) / (2.0 * r_e)
    d_minus_v = (d - altitude_m) * (d + r_e + r_s) / (2.0 * r_e)
    d_plus_v = 2.0 * d - d_minus_v
    arg = -vertical / d
    if abs(arg) > 1.0 + 1e-12:
        raise GeometryError(f"arccos argument {arg!r} outside [-1, 1]")
    horizontal = math.sqrt(max(d_minus_v * d_plus_v, 0.0))
    return math.atan2(vertical, horizontal)


def elevation_angle(ground_pos, sat_pos, consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
    """Elevation (radians, in [-pi/2, pi/2]) of ``sat_pos`` above the horizon at ``ground_pos``."""
    g = np.asarray(ground_pos, dtype=float)
    s = np.asarray(sat_pos, dtype=float)
    r_g = float(np.linalg.norm(g))
    if abs(r_g - consts.earth_radius_m) > 1e-6 * consts.earth_radius_m:
        raise GeometryError("ground point is not on the Earth sphere")
    rel = s - g
    d = float(np.linalg.norm(rel))
    if d == 0.0:
        raise GeometryError("satellite coincides with the ground point")
    up = g / r_g
    vertical = float(np.dot(rel, up))
    horizontal = float(np.linalg.norm(rel - vertical * up))
    # consistency check against the law-of-cosines form
    r_s = float(np.linalg.norm(s))
    arg = (r_g**2 + d**2 - r_s**2) / (2.0 * r_g * d)
    if abs(arg) > 1.0 + 1e-9:
        raise GeometryError(f"arccos argument {arg!r} outside [-1, 1]")
    return math.atan2(vertical, horizontal)


def elevation_matrix(ground: np.ndarray, sats: np.ndarray) -> np.ndarray:
    """Elevations (radians) for every (ground point, satellite) pair."""
    ground = np.atleast_2d(ground)
    sats = np.atleast_2d(sats)
    up = ground / np.linalg.norm(ground, axis=1, keepdims=True)
    rel = sats[None, :, :] - ground[:, None, :]
    vertical = np.einsum("gsk,gk->gs", rel, up)
    horiz = np.linalg.norm(rel - vertical[..., None] * up[:, None, :], axis=2)
    return np.arctan2(vertical, horiz)


def coverage(plane: OrbitalPlane, min_elevation_rad: float,
             consts: GeoConstants = DEFAULT_CONSTANTS) -> tuple[float, float]:
    """Angular radius of the coverage circle and the covered spherical-cap area."""
    if not 0.0 <= min_elevation_rad < math.pi / 2:
        raise ValueError("min elevation must lie in [0, pi/2)")
    r_e = consts.earth_radius_m
    beta = math.acos(r_e / (r_e + plane.altitude_m) * math.cos(min_elevation_rad)) - min_elevation_rad
    area = 2.0 * math.pi * r_e**2 * (1.0 - math.cos(beta))
    return beta, area


def propagation_delay(d_bs: float, d_ss: float, d_su: float,
                      consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
    if min(d_bs, d_ss, d_su) < 0:
        raise ValueError("distances must be non-negative")
    return (d_bs + d_ss + d_su) / consts.light_speed_m_s


# -- ground points -------------------------------------------------------------

def ground_point(lat_rad: float, lon_rad: float,
                 consts: GeoConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    r = consts.earth_radius_m
    return r * np.array([math.cos(lat_rad) * math.cos(lon_rad),
                         math.cos(lat_rad) * math.sin(lon_rad),
                         math.sin(lat_rad)])


def subsatellite_point(sat_pos, consts: GeoConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    s = np.asarray(sat_pos, dtype=float)
    return consts.earth_radius_m * s / np.linalg.norm(s)


def local_projection(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Azimuthal-equidistant (east, north) metres of sphere points around ``center``.

    Great-circle distance from ``center`` is preserved exactly.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    c = np.asarray(center, dtype=float)
    radius = float(np.linalg.norm(c))
    up = c / radius
    east = np.cross([0.0, 0.0, 1.0], up)
    if np.linalg.norm(east) < 1e-12:
        east = np.array([0.0, 1.0, 0.0])
    east /= np.linalg.norm(east)
    north = np.cross(up, east)
    unit = points / np.linalg.norm(points, axis=1, keepdims=True)
    ang = np.arctan2(np.linalg.norm(np.cross(unit, up), axis=1), unit @ up)
    tangent = np.stack([unit @ east, unit @ north], axis=1)
    norm = np.linalg.norm(tangent, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(norm > 0, tangent / norm, 0.0)
    return direction * (radius * ang)[:, None]


def points_in_disk(rng: np.random.Generator, n: int, center: np.ndarray, radius_m: float,
                   consts: GeoConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """``n`` uniform points of a spherical cap with great-circle radius ``radius_m``."""
    c = np.asarray(center, dtype=float)
    up = c / np.linalg.norm(c)
    east = np.cross([0.0, 0.0, 1.0], up)
    if np.linalg.norm(east) < 1e-12:
        east = np.array([0.0, 1.0, 0.0])
    east /= np.linalg.norm(east)
    north = np.cross(up, east)
    cap = radius_m / consts.earth_radius_m
    cos_ang = 1.0 - rng.random(n) * (1.0 - math.cos(cap))
    ang = np.arccos(cos_ang)
    az = rng.random(n) * 2.0 * math.pi
    dirs = (np.cos(ang)[:, None] * up
            + np.sin(ang)[:, None] * (np.cos(az)[:, None] * east + np.sin(az)[:, None] * north))
    return consts.earth_radius_m * dirs


# -- constraint checks -----------------------------------------------------

class Violation(NamedTuple):
    constraint: str
    subject: tuple
    value: float


def validate_constellation(state: ConstellationState, next_state: ConstellationState | None,
                           d_min: float, v_max: float,
                           elev_bounds: tuple[float, float] = (math.radians(12.0), math.pi / 2),
                           links: Sequence[tuple[np.ndarray, int]] = (),
                           consts: GeoConstants = DEFAULT_CONSTANTS) -> list[Violation]:
    """Check minimum separation, speed and elevation feasibility.

    ``links`` lists (ground position, satellite node) pairs whose elevation
    must stay within ``elev_bounds``. The speed check uses the chord
    between consecutive slots over one slot duration.
    """
    out: list[Violation] = []
    pos = state.positions
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    n = len(pos)
    for i in range(n):
        for j in range(i + 1, n):
            if dist[i, j] < d_min:
                out.append(Violation("min-distance", (i, j), float(dist[i, j])))
    if next_state is not None:
        step = np.linalg.norm(next_state.positions - pos, axis=1) / consts.slot_seconds
        for i, v in enumerate(step):
            if v > v_max:
                out.append(Violation("max-speed", (i,), float(v)))
    lo, hi = elev_bounds
    for ground, node in links:
        alpha = elevation_angle(ground, pos[node], consts)
        if not lo <= alpha <= hi:
            out.append(Violation("elevation", (node,), alpha))
    return out
