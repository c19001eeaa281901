"""Scenario configuration: nested dataclasses with a strict JSON loader."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .constants import (ACTOR_HIDDEN, ALTITUDE_M, CARRIER_HZ, CRITIC_HIDDEN, DISCOUNT, EPISODE_SLOTS,
                        LEARNING_RATE, MIN_ELEVATION_DEG, SATS_PER_PLANE)


class ConfigError(ValueError):
    """Schema violation; ``path`` names the offending field (dot separated)."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.message = message
        self.line = line
        where = path or "<root>"
        super().__init__(f"{where}: {message}" + (f" (line {line})" if line else ""))

    def to_json(self) -> dict:
        out = {"error": "config", "field": self.path, "message": self.message}
        if self.line is not None:
            out["line"] = self.line
        return out


@dataclass
class ConstellationSpec:
    num_planes: int = 3
    sats_per_plane: int = SATS_PER_PLANE
    altitude_m: float = ALTITUDE_M
    inclination_deg: float = 53.0
    min_elev_deg: float = MIN_ELEVATION_DEG
    raan_spread_deg: float = 360.0
    phasing: int = 1

    def check(self, path):
        _positive(path, "num_planes", self.num_planes)
        _positive(path, "sats_per_plane", self.sats_per_plane)
        _positive(path, "altitude_m", self.altitude_m)
        _within(path, "inclination_deg", self.inclination_deg, 0.0, 180.0)
        _within(path, "min_elev_deg", self.min_elev_deg, 0.0, 90.0)
        _within(path, "raan_spread_deg", self.raan_spread_deg, 0.0, 360.0)


@dataclass
class RainSpec:
    phi_r: float = 1.0
    mu_r: float = 0.7
    rate_mm_h: float = 5.0
    path_km: float = 3.0


@dataclass
class CloudSpec:
    xi_c: float = 4.0
    chi_c_g_m3: float = 0.1
    path_km: float = 1.0


@dataclass
class PlasmaSpec:
    n_e_per_m3: float = 1e12
    f_col_hz: float = 1e4
    b_avg_tesla: float = 45e-6


@dataclass
class ChannelSpec:
    fc_hz: float = CARRIER_HZ
    kappa_abs_per_m: float = 1e-5
    rain: RainSpec = field(default_factory=RainSpec)
    cloud: CloudSpec = field(default_factory=CloudSpec)
    plasma: PlasmaSpec = field(default_factory=PlasmaSpec)
    temperature_K: float = 1000.0
    pressure_Pa: float = 101_325.0
    atmosphere_height_m: float = 10_000.0
    rician_K_H: float = 10.0
    rician_K_g: float = 10.0
    bandwidth_hz: float = 1e9
    noise_psd_dbm_hz: float = -174.0
    gbs_gain_dbi: float = 50.0
    rue_gain_dbi: float = 40.0
    gbs_antennas: int = 4

    def check(self, path):
        _positive(path, "fc_hz", self.fc_hz)
        _positive(path, "bandwidth_hz", self.bandwidth_hz)
        _positive(path, "gbs_antennas", self.gbs_antennas)
        for name in ("kappa_abs_per_m", "rician_K_H", "rician_K_g", "atmosphere_height_m",
                     "temperature_K", "pressure_Pa"):
            _non_negative(path, name, getattr(self, name))
        for sub in ("rain", "cloud", "plasma"):
            obj = getattr(self, sub)
            for f in dataclasses.fields(obj):
                _non_negative(f"{path}.{sub}", f.name, getattr(obj, f.name))


@dataclass
class RisSpec:
    num_elements: int = 16
    element_size_m: float = 1.5e-3
    amplitude: float = 1.0

    def check(self, path):
        _positive(path, "num_elements", self.num_elements)
        _positive(path, "element_size_m", self.element_size_m)
        _within(path, "amplitude", self.amplitude, 0.0, 1.0)


@dataclass
class ActorsSpec:
    num_gbs: int = 2
    num_rues: int = 8
    aoi_lat_deg: Optional[float] = None
    aoi_lon_deg: Optional[float] = None
    aoi_radius_m: float = 300e3
    gbs_distance_m: float = 1000e3
    gbs_bearing_deg: float = 90.0
    gbs_positions_deg: Optional[list[list[float]]] = None
    rue_positions_deg: Optional[list[list[float]]] = None
    hppp_intensity_per_km2: Optional[float] = None
    p_max_w: float = 10.0

    def check(self, path):
        _positive(path, "num_gbs", self.num_gbs)
        _positive(path, "num_rues", self.num_rues)
        _positive(path, "aoi_radius_m", self.aoi_radius_m)
        _non_negative(path, "gbs_distance_m", self.gbs_distance_m)
        _positive(path, "p_max_w", self.p_max_w)
        if (self.aoi_lat_deg is None) != (self.aoi_lon_deg is None):
            raise ConfigError(f"{path}.aoi_lat_deg", "give both AoI coordinates or neither")
        if self.hppp_intensity_per_km2 is not None:
            _positive(path, "hppp_intensity_per_km2", self.hppp_intensity_per_km2)
        for name, n in (("gbs_positions_deg", self.num_gbs), ("rue_positions_deg", self.num_rues)):
            rows = getattr(self, name)
            if rows is None:
                continue
            if len(rows) != n:
                raise ConfigError(f"{path}.{name}", f"expected {n} [lat, lon] pairs, got {len(rows)}")
            for i, row in enumerate(rows):
                if len(row) != 2:
                    raise ConfigError(f"{path}.{name}[{i}]", "expected [lat, lon]")


@dataclass
class TrafficSpec:
    packet_size_bits: float = 1e6
    arrival_rate: float = 1.0
    psi_max_s: float = 0.05
    max_packets: int = 8
    link_rate_bps: float = 1e10

    def check(self, path):
        _non_negative(path, "packet_size_bits", self.packet_size_bits)
        _non_negative(path, "arrival_rate", self.arrival_rate)
        _positive(path, "psi_max_s", self.psi_max_s)
        _positive(path, "max_packets", self.max_packets)
        _positive(path, "link_rate_bps", self.link_rate_bps)


@dataclass
class MappoSpec:
    gamma: float = DISCOUNT
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 3
    minibatch: int = 16
    lr: float = LEARNING_RATE
    iters_per_update: int = 16
    entropy_coef: float = 0.01
    routing_entropy_coef: float = 0.2
    rollout_steps: int = 256
    actor_hidden: tuple[int, ...] = ACTOR_HIDDEN
    critic_hidden: tuple[int, ...] = CRITIC_HIDDEN
    train_steps: int = 500_000
    routing_max_steps: int = 12
    routing_reward_scale: float = 1e-3

    def check(self, path):
        _within(path, "gamma", self.gamma, 0.0, 1.0)
        _within(path, "gae_lambda", self.gae_lambda, 0.0, 1.0)
        for name in ("clip_eps", "epochs", "minibatch", "lr", "rollout_steps", "routing_max_steps"):
            _positive(path, name, getattr(self, name))
        _non_negative(path, "train_steps", self.train_steps)
        for name in ("actor_hidden", "critic_hidden"):
            if any(h < 1 for h in getattr(self, name)):
                raise ConfigError(f"{path}.{name}", "layer widths must be positive")


@dataclass
class WoaSpec:
    pop_size: int = 30
    max_iters: int = 500
    spiral_b: float = 1.0
    penalty_mu: float = 1e14
    r_min_bps: float = 0.0
    a_max: float = 2.0

    def check(self, path):
        if self.pop_size < 2:
            raise ConfigError(f"{path}.pop_size", "must be at least 2")
        _positive(path, "max_iters", self.max_iters)
        _positive(path, "penalty_mu", self.penalty_mu)
        _non_negative(path, "r_min_bps", self.r_min_bps)


@dataclass
class BcdSpec:
    rounds: int = 3
    tol: float = 0.01
    phase_mode: str = "learned"
    routing_mode: str = "learned"

    def check(self, path):
        _positive(path, "rounds", self.rounds)
        _non_negative(path, "tol", self.tol)
        if self.phase_mode not in PHASE_MODES:
            raise ConfigError(f"{path}.phase_mode", f"must be one of {sorted(PHASE_MODES)}")
        if self.routing_mode not in ("learned", "bfs"):
            raise ConfigError(f"{path}.routing_mode", "must be 'learned' or 'bfs'")


PHASE_MODES = {"learned", "coherent", "zero"}


@dataclass
class Scenario:
    constellation: ConstellationSpec = field(default_factory=ConstellationSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    ris: RisSpec = field(default_factory=RisSpec)
    actors: ActorsSpec = field(default_factory=ActorsSpec)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    mappo: MappoSpec = field(default_factory=MappoSpec)
    woa: WoaSpec = field(default_factory=WoaSpec)
    bcd: BcdSpec = field(default_factory=BcdSpec)
    episode_slots: int = EPISODE_SLOTS
    slot_s: float = 10.0
    seed: int = 0

    def check(self, path=""):
        _positive(path, "episode_slots", self.episode_slots)
        _positive(path, "slot_s", self.slot_s)
        for f in dataclasses.fields(self):
            obj = getattr(self, f.name)
            if dataclasses.is_dataclass(obj) and hasattr(obj, "check"):
                obj.check(f.name)


# -- field checks -----------------------------------------------------------

def _join(path, name):
    return f"{path}.{name}" if path else name


def _positive(path, name, value):
    if not value > 0:
        raise ConfigError(_join(path, name), f"must be positive, got {value!r}")


def _non_negative(path, name, value):
    if not value >= 0:
        raise ConfigError(_join(path, name), f"must be non-negative, got {value!r}")


def _within(path, name, value, lo, hi):
    if not lo <= value <= hi:
        raise ConfigError(_join(path, name), f"must lie in [{lo}, {hi}], got {value!r}")


# -- decoding -----------------------------------------------------------------

def _decode(tp, value, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _decode(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {type(value).__name__}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {type(value).__name__}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {type(value).__name__}")
        return value
    if origin in (list, tuple):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        item_tp = args[0]
        items = [_decode(item_tp, v, f"{path}[{i}]") for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    raise ConfigError(path, f"unsupported field type {tp!r}")


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(_join(path, key), "unknown key")
    kwargs = {k: _decode(hints[k], v, _join(path, k)) for k, v in data.items()}
    return cls(**kwargs)


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key.split(".")[-1].split("[")[0]}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def from_dict(data: dict) -> Scenario:
    sc = _build(Scenario, data, "")
    sc.check()
    return sc


def parse_config(path) -> Scenario:
    """Load and validate a scenario file; an empty file gives the defaults."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return from_dict({})
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc.msg}", exc.lineno) from None
    try:
        return from_dict(data)
    except ConfigError as exc:
        if exc.line is None:
            exc = ConfigError(exc.path, exc.message, _line_of(text, exc.path))
        raise exc from None


def to_dict(sc: Scenario) -> dict:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, list):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v
    return plain(dataclasses.asdict(sc))


def serialize(sc: Scenario) -> str:
    return json.dumps(to_dict(sc), indent=2, sort_keys=False) + "\n"


def config_hash(sc: Scenario) -> str:
    """Short digest of the canonical JSON form (seed included)."""
    canon = json.dumps(to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def with_overrides(sc: Scenario, **changes: Any) -> Scenario:
    """Copy with dotted-path overrides, e.g. ``with_overrides(sc, **{"ris.num_elements": 8})``."""
    data = to_dict(sc)
    for key, value in changes.items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(key, "unknown key")
        node[parts[-1]] = value
    return from_dict(data)
