"""Slot-driven packet routing over the inter-satellite grid."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .constants import DEFAULT_CONSTANTS, GeoConstants
from .geometry import Constellation, ConstellationState, elevation_angle, isl_distance
from .results import write_rows

FORE, AFT, LEFT, RIGHT, DELIVER = range(5)
ACTION_NAMES = ("fore", "aft", "left", "right", "deliver")
NUM_ACTIONS = 5


class IllegalAction(ValueError):
    pass


@dataclass
class TrafficConfig:
    packet_size_bits: float = 1e6
    arrival_rate: float = 1.0
    psi_max_s: float = 0.05
    max_packets: int = 8
    link_rate_bps: float = 1e10

    def __post_init__(self):
        if self.arrival_rate < 0:
            raise ValueError("arrival rate must be non-negative")
        if self.packet_size_bits < 0 or self.psi_max_s <= 0 or self.link_rate_bps <= 0:
            raise ValueError("invalid traffic parameters")


@dataclass
class Packet:
    id: int
    source_gbs: int
    dest_rue: int
    size_bits: float
    created_slot: int
    current_node: int = -1
    hop_trace: list = field(default_factory=list)
    hop_dist_m: list = field(default_factory=list)
    hop_rate_bps: list = field(default_factory=list)
    delivered_slot: int | None = None
    dropped: bool = False
    latency_s: float = 0.0
    isl_hops: int = 0

    @property
    def active(self) -> bool:
        return self.delivered_slot is None and not self.dropped


def spawn_packets(rng: np.random.Generator, traffic: TrafficConfig, num_gbs: int, num_rues: int,
                  slot: int, first_id: int = 0) -> list[Packet]:
    """Poisson number of new packets, uniform source GBS and destination RUE."""
    n = int(rng.poisson(traffic.arrival_rate)) if traffic.arrival_rate > 0 else 0
    out = []
    for k in range(n):
        b = int(rng.integers(num_gbs))
        u = int(rng.integers(num_rues))
        out.append(Packet(id=first_id + k, source_gbs=b, dest_rue=u,
                          size_bits=traffic.packet_size_bits, created_slot=slot))
    return out


def bfs_hops(adjacency: Mapping[int, Sequence[int]], targets: Sequence[int]) -> dict[int, int]:
    """Hop distance from every reachable node to the nearest target."""
    dist = {int(t): 0 for t in targets}
    queue = deque(sorted(dist))
    while queue:
        n = queue.popleft()
        for m in adjacency[n]:
            if m not in dist:
                dist[m] = dist[n] + 1
                queue.append(m)
    return dist


def bfs_distance(adjacency: Mapping[int, Sequence[int]], src: int, dst: int) -> int:
    return bfs_hops(adjacency, [dst]).get(src, -1)


def bfs_path(adjacency: Mapping[int, Sequence[int]], src: int, dst: int) -> list[int]:
    """A hop-shortest node sequence ``src .. dst``; the lowest-numbered neighbour wins ties."""
    hops = bfs_hops(adjacency, [dst])
    if src not in hops:
        raise ValueError(f"node {dst} is unreachable from {src}")
    path = [int(src)]
    while path[-1] != dst:
        n = path[-1]
        path.append(min(m for m in adjacency[n] if hops.get(m, -1) == hops[n] - 1))
    return path


@dataclass
class NetState:
    slot: int
    packets: list[Packet]
    constellation: ConstellationState
    serving_sat: dict[int, int] | None = None


class RoutingWorld:
    """Routing MDP world.

    Packets are lifted from their GBS to the destination's serving
    satellite when the GBS sees it, else to the nearest visible satellite,
    then move one ISL hop per slot. Delivery is legal from a
    satellite that covers the destination RUE; when ``serving_sat`` is
    given it must also be that RUE's associated satellite.

    Latency is accounted analytically: propagation plus serialization on
    every hop. A packet whose accumulated latency exceeds ``psi_max_s`` is
    dropped.
    """

    def __init__(self, constellation: Constellation, gbs_positions: np.ndarray, rue_positions: np.ndarray,
                 min_elev_rad: float, traffic: TrafficConfig | None = None,
                 serving_sat: Mapping[int, int] | None = None,
                 rue_rate_bps: Callable[[int, int], float] | Sequence[float] | None = None,
                 freeze_topology: bool = False, start_slot: int = 0,
                 consts: GeoConstants = DEFAULT_CONSTANTS):
        self.constellation = constellation
        self.gbs = np.atleast_2d(np.asarray(gbs_positions, dtype=float))
        self.rues = np.atleast_2d(np.asarray(rue_positions, dtype=float))
        self.min_elev = float(min_elev_rad)
        self.traffic = traffic if traffic is not None else TrafficConfig()
        self.serving_sat = dict(serving_sat) if serving_sat is not None else None
        self._rue_rate = rue_rate_bps
        self.freeze = freeze_topology
        self.consts = consts
        self.start_slot = int(start_slot)
        self.slot = self.start_slot
        self.packets: list[Packet] = []
        self.spawned = 0
        self.adjacency = constellation.state(start_slot).adjacency()
        self._cache: dict = {}

    # -- topology ----------------------------------------------------------
    @property
    def topo_slot(self) -> int:
        return self.start_slot if self.freeze else self.slot

    def topology(self) -> ConstellationState:
        return self.constellation.state(self.topo_slot)

    def state(self) -> NetState:
        return NetState(self.slot, self.packets, self.topology(), self.serving_sat)

    def covers(self, sat: int, rue: int) -> bool:
        pos = self.topology().positions[sat]
        return elevation_angle(self.rues[rue], pos, self.consts) >= self.min_elev

    def targets(self, rue: int) -> list[int]:
        key = ("targets", self.topo_slot, rue)
        if key not in self._cache:
            if self.serving_sat is not None:
                s = self.serving_sat.get(rue, -1)
                out = [s] if s >= 0 and self.covers(s, rue) else []
            else:
                out = [s for s in range(self.constellation.num_sats) if self.covers(s, rue)]
            self._cache[key] = out
        return self._cache[key]

    def _routing_table(self, rue: int):
        """Per node: (hops to a target, metres along the best hop-shortest path incl. downlink)."""
        key = ("table", self.topo_slot, rue)
        if key in self._cache:
            return self._cache[key]
        topo = self.topology()
        tg = self.targets(rue)
        hops = bfs_hops(self.adjacency, tg)
        rem = {}
        for t in tg:
            rem[t] = float(np.linalg.norm(topo.positions[t] - self.rues[rue]))
        for n in sorted(hops, key=lambda k: (hops[k], k)):
            if hops[n] == 0:
                continue
            best = math.inf
            for m in self.adjacency[n]:
                if hops.get(m, -1) == hops[n] - 1:
                    best = min(best, isl_distance(topo.positions[n], topo.positions[m]) + rem[m])
            rem[n] = best
        self._cache[key] = (hops, rem)
        return hops, rem

    def remaining_m(self, packet: Packet) -> float:
        if packet.delivered_slot is not None:
            return 0.0
        _, rem = self._routing_table(packet.dest_rue)
        return rem.get(packet.current_node, math.inf)

    def hops_to_go(self, packet: Packet) -> int:
        hops, _ = self._routing_table(packet.dest_rue)
        return hops.get(packet.current_node, -1)

    # -- packets -------------------------------------------------------------
    def rue_rate(self, rue: int) -> float:
        r = self._rue_rate
        if r is None:
            return self.traffic.link_rate_bps
        if callable(r):
            return float(r(rue, self.slot))
        return float(r[rue])

    def uplink_satellite(self, gbs: int, rue: int | None = None) -> int:
        """The destination's serving satellite when the GBS sees it, else the nearest visible one."""
        pos = self.topology().positions
        elev = np.array([elevation_angle(self.gbs[gbs], p, self.consts) for p in pos])
        visible = elev >= self.min_elev
        if rue is not None and self.serving_sat is not None:
            s = self.serving_sat.get(rue, -1)
            if s >= 0 and visible[s]:
                return int(s)
        dist = np.linalg.norm(pos - self.gbs[gbs], axis=1)
        cand = np.where(visible, dist, np.inf) if visible.any() else dist
        return int(np.argmin(cand))

    def _add_hop(self, p: Packet, kind: str, node: int, d: float, rate: float):
        p.hop_trace.append((kind, node))
        p.hop_dist_m.append(d)
        p.hop_rate_bps.append(rate)
        serial = p.size_bits / rate if rate > 0 else (0.0 if p.size_bits == 0 else math.inf)
        p.latency_s += d / self.consts.light_speed_m_s + serial
        if p.latency_s > self.traffic.psi_max_s:
            p.dropped = True

    def inject(self, packets: Sequence[Packet], source_sat: int | None = None) -> list[Packet]:
        """Place new packets on their uplink satellite (or ``source_sat``)."""
        for p in packets:
            p.id = self.spawned
            self.spawned += 1
            p.hop_trace = [("gbs", p.source_gbs)]
            s = self.uplink_satellite(p.source_gbs, p.dest_rue) if source_sat is None else int(source_sat)
            d = float(np.linalg.norm(self.topology().positions[s] - self.gbs[p.source_gbs]))
            p.current_node = s
            self._add_hop(p, "sat", s, d, self.traffic.link_rate_bps)
            if not self.targets(p.dest_rue):
                p.dropped = True
            self.packets.append(p)
        return list(packets)

    def active_packets(self) -> list[Packet]:
        return [p for p in self.packets if p.active]

    def legal_actions(self, packet: Packet) -> np.ndarray:
        mask = np.zeros(NUM_ACTIONS, dtype=bool)
        if not packet.active:
            return mask
        row = self.topology().neighbors[packet.current_node]
        mask[:4] = row >= 0
        mask[DELIVER] = packet.current_node in self.targets(packet.dest_rue)
        return mask

    def oracle_action(self, packet: Packet) -> int:
        """Hop-shortest, then metre-shortest next action; lowest index on ties."""
        hops, rem = self._routing_table(packet.dest_rue)
        n = packet.current_node
        if hops.get(n) == 0:
            return DELIVER
        topo = self.topology()
        best, best_a = math.inf, -1
        for a in range(4):
            m = int(topo.neighbors[n, a])
            if m >= 0 and hops.get(m, -1) == hops.get(n, -2) - 1:
                cost = isl_distance(topo.positions[n], topo.positions[m]) + rem[m]
                if cost < best:
                    best, best_a = cost, a
        if best_a < 0:
            raise IllegalAction(f"destination of packet {packet.id} is unreachable")
        return best_a

    def step(self, actions: Mapping[int, int]):
        """Apply one action per active packet id; advance one slot.

        Returns (remaining metres per packet id, packets delivered this slot).
        """
        topo = self.topology()
        delivered = []
        for p in self.active_packets():
            if p.id not in actions:
                raise IllegalAction(f"no action for packet {p.id}")
            a = int(actions[p.id])
            if not 0 <= a < NUM_ACTIONS or not self.legal_actions(p)[a]:
                raise IllegalAction(f"action {a} is not legal for packet {p.id}")
            n = p.current_node
            if a == DELIVER:
                d = float(np.linalg.norm(topo.positions[n] - self.rues[p.dest_rue]))
                self._add_hop(p, "rue", p.dest_rue, d, self.rue_rate(p.dest_rue))
                if not p.dropped:
                    p.delivered_slot = self.slot
                    p.current_node = -2
                    delivered.append(p)
            else:
                m = int(topo.neighbors[n, a])
                self._add_hop(p, "sat", m, isl_distance(topo.positions[n], topo.positions[m]),
                              self.traffic.link_rate_bps)
                p.current_node = m
                p.isl_hops += 1
        self.slot += 1
        remaining = {p.id: self.remaining_m(p) for p in self.packets if p.active}
        return remaining, delivered

    def counts(self) -> dict[str, int]:
        return {
            "spawned": self.spawned,
            "in_flight": sum(p.active for p in self.packets),
            "delivered": sum(p.delivered_slot is not None for p in self.packets),
            "dropped": sum(p.dropped for p in self.packets),
        }


def measure_latency(delivered: Sequence[Packet], size_bits: float | None = None,
                    consts: GeoConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Propagation plus per-hop serialization for each delivered packet."""
    if len(delivered) == 0:
        raise ValueError("no delivered packets")
    out = []
    for p in delivered:
        size = p.size_bits if size_bits is None else size_bits
        t = 0.0
        for d, r in zip(p.hop_dist_m, p.hop_rate_bps):
            t += d / consts.light_speed_m_s
            if size > 0:
                t += size / r
        out.append(t)
    return np.array(out)


def run_oracle_episode(world: RoutingWorld, rng: np.random.Generator, slots: int,
                       trace_rows: list | None = None) -> list[Packet]:
    """Drive ``world`` with the shortest-path oracle; Poisson arrivals each slot."""
    delivered = []
    for _ in range(slots):
        new = spawn_packets(rng, world.traffic, len(world.gbs), len(world.rues), world.slot)
        world.inject(new)
        actions = {p.id: world.oracle_action(p) for p in world.active_packets()}
        slot = world.slot
        rem, done = world.step(actions)
        delivered.extend(done)
        if trace_rows is not None:
            for pid, a in actions.items():
                p = world.packets[pid]
                trace_rows.append((slot, pid, p.current_node, ACTION_NAMES[a],
                                   rem.get(pid, 0.0), int(p.delivered_slot is not None)))
    return delivered


def write_trace(path, rows, prov=None) -> None:
    """Rows of (slot, packet, node, action, remaining_m, delivered)."""
    write_rows(path, "route_trace", rows, prov)
