"""Block coordinate descent over association, learned routing/phases, and transmit power."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import mappo
from .association import AssociationMatrix, InfeasibleAssociation, associate
from .netsim import Packet, RoutingWorld, TrafficConfig
from .results import write_rows
from .system import RuePath, SystemModel
from .woa import WoaHyper

log = logging.getLogger(__name__)


@dataclass
class ConstraintReport:
    rate_shortfalls: int  # (u, t) pairs below the rate floor
    late_rues: int  # RUEs whose packet latency exceeds the delay budget
    power_excess: int  # GBSs above their power budget
    unrouted: list[int] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.rate_shortfalls == 0 and self.late_rues == 0 and self.power_excess == 0 and not self.unrouted


@dataclass
class BcdSolution:
    assoc: AssociationMatrix
    paths: list[RuePath | None]
    power: np.ndarray
    phase_mode: str = "zero"
    routing_agent: mappo.Agent | None = None
    phase_agents: dict[int, mappo.Agent] = field(default_factory=dict)
    objective: float = 0.0
    round_trace: list[tuple[int, str, float, bool]] = field(default_factory=list)
    diagnostic: str = ""


# -- evaluation -----------------------------------------------------------------

def phase_obs(system: SystemModel, rue: int, link, gamma_prev: float = 1.0) -> np.ndarray:
    return mappo.ps_observe(link.budget, gamma_prev)


def _phase_fn(system: SystemModel, sol: BcdSolution):
    def fn(rue, slot, link, cascade):
        agent = sol.phase_agents.get(rue)
        n = system.num_elements * len(cascade.hops)
        if agent is None or agent.spec.num_slots != n:
            return np.zeros(n)
        mean, _ = agent.act(phase_obs(system, rue, link), None, deterministic=True)
        return np.mod(mean, mappo.TWO_PI)
    return fn


def solution_kappa(system: SystemModel, sol: BcdSolution, slots):
    paths = [p for p in sol.paths if p is not None]
    if sol.phase_mode == "learned":
        k, active = system.kappa(paths, slots, "given", _phase_fn(system, sol))
    else:
        k, active = system.kappa(paths, slots, sol.phase_mode)
    return k, active


def path_latency(system: SystemModel, path: RuePath, downlink_bps: float, size_bits: float,
                 link_rate_bps: float, slot: int = 0) -> float:
    """Propagation plus serialization over uplink, ISL hops and downlink."""
    pos = system.constellation.state(slot).positions
    pts = [system.gbs_pos[path.gbs], *[pos[s] for s in path.sats], system.rue_pos[path.rue]]
    c = system.consts.light_speed_m_s
    total = 0.0
    for i, (a, b) in enumerate(zip(pts[:-1], pts[1:])):
        rate = downlink_bps if i == len(pts) - 2 else link_rate_bps
        serial = size_bits / rate if rate > 0 else (0.0 if size_bits == 0 else math.inf)
        total += float(np.linalg.norm(b - a)) / c + serial
    return total


def evaluate_objective(sol: BcdSolution, system: SystemModel, slots=None) -> tuple[float, ConstraintReport]:
    """Sum of per-slot RUE rates over the evaluation episode, plus constraint counts."""
    slots = list(range(system.sc.episode_slots)) if slots is None else list(slots)
    k, active = solution_kappa(system, sol, slots)
    prob = system.power_problem(k, active)
    rates = prob.rates(sol.power)
    objective = float(rates[active].sum())
    unrouted = [u for u, p in enumerate(sol.paths) if p is None]
    floor = prob.r_min_bps
    shortfalls = int(np.sum(active & (rates < floor)))
    shortfalls += len(unrouted) * len(slots) if floor > 0 else 0
    p = np.asarray(sol.power, float)
    excess = sum(int(p[prob.link_gbs == b].sum() > prob.p_max_w * (1 + 1e-9)) for b in np.unique(prob.link_gbs))
    tr = system.sc.traffic
    late = 0
    for path in sol.paths:
        if path is None:
            continue
        lat = path_latency(system, path, float(rates[path.rue, 0]), tr.packet_size_bits, tr.link_rate_bps)
        late += int(lat > tr.psi_max_s)
    return objective, ConstraintReport(shortfalls, late, excess, unrouted)


# -- routing block ------------------------------------------------------------------

def routing_env(system: SystemModel) -> mappo.RoutingEnv:
    return mappo.RoutingEnv(system.constellation, system.min_elev,
                            max_steps=system.sc.mappo.routing_max_steps)


def learned_paths(system: SystemModel, agent: mappo.Agent, slot: int = 0) -> list[RuePath | None]:
    """Greedy routing of one packet per RUE from its GBS; ``None`` where delivery fails."""
    serving = {u: system.assoc.satellite_of(u) for u in range(system.num_rues)}
    traffic = TrafficConfig(psi_max_s=1e9, arrival_rate=0.0)
    out = []
    for u in range(system.num_rues):
        world = RoutingWorld(system.constellation, system.gbs_pos, system.rue_pos, system.min_elev,
                             traffic, serving_sat=serving, freeze_topology=True, start_slot=slot,
                             consts=system.consts)
        (pkt,) = world.inject([Packet(id=0, source_gbs=system.assoc.gbs_of(u), dest_rue=u, size_bits=0.0,
                                      created_slot=slot)])
        for _ in range(system.sc.mappo.routing_max_steps):
            if not pkt.active:
                break
            obs = mappo.routing_observe(world, [pkt], 1)
            mask = world.legal_actions(pkt)[None, :]
            a, _ = agent.act(obs, None, mask, deterministic=True)
            world.step({pkt.id: int(a[0])})
        if pkt.delivered_slot is None:
            out.append(None)
            continue
        sats = [n for kind, n in pkt.hop_trace if kind == "sat"]
        out.append(RuePath(u, pkt.source_gbs, sats))
    return out


# -- phase block ------------------------------------------------------------------------

def phase_envs(system: SystemModel, paths, slot: int = 0) -> dict[str, mappo.PhaseEnv]:
    envs = {}
    for p in paths:
        if p is None:
            continue
        link = system.slot_link(p, slot)
        cas = system.cascade(link, p.rue, slot)
        envs[f"PS{p.rue}"] = mappo.PhaseEnv(cas, link.budget, [system.num_elements] * len(p.sats))
    return envs


def hyper_from(system: SystemModel) -> mappo.PpoHyper:
    m = system.sc.mappo
    return mappo.PpoHyper(gamma=m.gamma, gae_lambda=m.gae_lambda, clip_eps=m.clip_eps, epochs=m.epochs,
                          minibatch=m.minibatch, lr=m.lr, iters_per_update=m.iters_per_update,
                          entropy_coef=m.entropy_coef, routing_entropy_coef=m.routing_entropy_coef,
                          rollout_steps=m.rollout_steps, actor_hidden=tuple(m.actor_hidden),
                          critic_hidden=tuple(m.critic_hidden))


def train_agents(system: SystemModel, sol: BcdSolution, rng: np.random.Generator,
                 steps: int | None = None) -> tuple[mappo.Agent, dict[int, mappo.Agent], mappo.TrainResult]:
    """Joint MAPPO run: the routing agent plus one phase agent per routed RUE.

    Agents carried in ``sol`` are warm-started when their action size still
    matches.
    """
    steps = system.sc.mappo.train_steps if steps is None else steps
    hyper = hyper_from(system)
    ro_env = routing_env(system)
    base_paths = [p for p in sol.paths if p is not None] or system.bfs_paths()
    env = mappo.JointEnv(ro_env, phase_envs(system, base_paths))
    obs = env.reset(rng)
    fresh = mappo.make_agents(env, obs, hyper, rng, system.sc.mappo.routing_reward_scale)
    agents = {}
    for aid, ag in fresh.items():
        old = sol.routing_agent if aid == "RO" else sol.phase_agents.get(int(aid[2:]))
        same = old is not None and old.spec.num_slots == ag.spec.num_slots and \
            old.spec.global_obs_dim == ag.spec.global_obs_dim
        agents[aid] = old if same else ag
    result = mappo.train(env, agents, hyper, steps, rng)
    ro = result.agents["RO"]
    ps = {int(aid[2:]): a for aid, a in result.agents.items() if aid != "RO"}
    return ro, ps, result


# -- the outer loop ---------------------------------------------------------------------

def woa_hyper(system: SystemModel) -> WoaHyper:
    w = system.sc.woa
    return WoaHyper(pop_size=w.pop_size, max_iters=w.max_iters, spiral_b=w.spiral_b,
                    penalty_mu=w.penalty_mu, r_min_bps=w.r_min_bps, a_max=w.a_max)


def initial_solution(system: SystemModel) -> BcdSolution:
    """BFS routes, zero phases and an even power split."""
    _, link_gbs = system.links()
    k = np.zeros((system.num_rues, 1))
    power = system.power_problem(k).uniform()
    return BcdSolution(assoc=system.assoc, paths=system.bfs_paths(), power=power, phase_mode="zero")


def _copy(sol: BcdSolution, **changes) -> BcdSolution:
    fields = dict(assoc=sol.assoc, paths=list(sol.paths), power=np.array(sol.power), phase_mode=sol.phase_mode,
                  routing_agent=sol.routing_agent, phase_agents=dict(sol.phase_agents),
                  objective=sol.objective, round_trace=sol.round_trace, diagnostic=sol.diagnostic)
    fields.update(changes)
    return BcdSolution(**fields)


def solve(system: SystemModel, rounds: int | None = None, tol: float | None = None,
          rng: np.random.Generator | None = None, train_steps: int | None = None,
          slots=None) -> BcdSolution:
    """Association, then MAPPO, then WOA, per round; a block result is kept only if the objective does not drop."""
    sc = system.sc
    rounds = sc.bcd.rounds if rounds is None else rounds
    tol = sc.bcd.tol if tol is None else tol
    rng = rng if rng is not None else np.random.default_rng(sc.seed)
    slots = list(range(sc.episode_slots)) if slots is None else list(slots)

    best = initial_solution(system)
    best.objective, rep = evaluate_objective(best, system, slots)
    trace = [(0, "init", best.objective, rep.feasible)]
    best.round_trace = trace

    def offer(cand: BcdSolution, rnd: int, block: str):
        nonlocal best
        obj, report = evaluate_objective(cand, system, slots)
        if math.isfinite(obj) and obj >= best.objective:
            cand.objective = obj
            best = cand
            feas = report.feasible
        else:
            _, report = evaluate_objective(best, system, slots)
            feas = report.feasible
        trace.append((rnd, block, best.objective, feas))
        best.round_trace = trace
        log.info("round %d %s objective %.6g (candidate %.6g)", rnd, block, best.objective, obj)

    for rnd in range(1, rounds + 1):
        start = best.objective
        try:
            assoc, _, _ = associate(system.rue_pos, system.constellation.state(0).positions, system.gbs_pos,
                                    system.min_elev, consts=system.consts)
            offer(_copy(best, assoc=assoc), rnd, "association")

            ro, ps, _ = train_agents(system, best, rng, train_steps)
            paths = learned_paths(system, ro) if sc.bcd.routing_mode == "learned" else system.bfs_paths()
            mode = sc.bcd.phase_mode
            cand = _copy(best, paths=paths, routing_agent=ro, phase_agents=ps, phase_mode=mode)
            if mode == "learned":
                # phase agents were trained on the incumbent routes; retrain on changed ones
                stale = [u for u, p in enumerate(paths)
                         if p is not None and (u not in ps or ps[u].spec.num_slots != system.num_elements * len(p.sats))]
                if stale:
                    _, ps, _ = train_agents(system, cand, rng, train_steps)
                    cand.phase_agents = ps
            offer(cand, rnd, "mappo")

            k, active = solution_kappa(system, best, slots)
            prob = system.power_problem(k, active)
            res = prob.solve(woa_hyper(system), rng, init=np.array([best.power, prob.uniform()]))
            offer(_copy(best, power=res.best), rnd, "woa")
        except (InfeasibleAssociation, FloatingPointError, ValueError) as exc:
            best.diagnostic = f"round {rnd}: {type(exc).__name__}: {exc}"
            log.error("%s", best.diagnostic)
            break
        gain = best.objective - start
        if gain <= tol * max(abs(start), 1e-300):
            break
    return best


def write_trace(path, trace, prov=None) -> None:
    write_rows(path, "bcd_trace", [(r, b, float(o), bool(f)) for r, b, o, f in trace], prov)
