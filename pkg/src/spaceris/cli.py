"""Command-line entry point: ``python -m spaceris <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bcd, mappo, sweeps
from . import learnkit as lk
from .channel import total_loss
from .geometry import elevation_angle
from .results import Provenance, ResultTable
from .scenario import ConfigError, Scenario, config_hash, parse_config, with_overrides
from .system import SystemModel

log = logging.getLogger("spaceris")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
EXIT_USAGE = 2


def _fail(code: int, kind: str, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}) + "\n")
    return code


def _load(args) -> Scenario:
    sc = parse_config(args.config) if args.config else Scenario()
    if args.seed is not None:
        sc = with_overrides(sc, seed=args.seed)
    return sc


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(sc: Scenario, args, prov: Provenance, out: Path) -> None:
    system = SystemModel(sc)
    rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 0xBCD]))
    sol = bcd.solve(system, rng=rng)
    ResultTable("bcd_trace", [(r, b, float(o), bool(f)) for r, b, o, f in sol.round_trace]).write(out, prov)

    slots = list(range(sc.episode_slots))
    k, active = bcd.solution_kappa(system, sol, slots)
    prob = system.power_problem(k, active)
    rates = prob.rates(sol.power)
    p_rue = prob.rue_power(sol.power)
    rows = [(u, t, float(rates[u, i]) if active[u, i] else 0.0, float(p_rue[u]))
            for u in range(system.num_rues) for i, t in enumerate(slots)]
    ResultTable("rates", rows).write(out, prov)
    _write_association(system, out, prov)
    if sol.diagnostic:
        log.error("%s", sol.diagnostic)


def _write_association(system: SystemModel, out: Path, prov: Provenance) -> None:
    pos = system.constellation.state(0).positions
    rows = []
    for u in range(system.num_rues):
        s = system.assoc.satellite_of(u)
        d = float(np.linalg.norm(pos[s] - system.rue_pos[u])) if s >= 0 else math.nan
        rows.append((u, system.assoc.gbs_of(u), s, system.cluster_sats.index(s) if s in system.cluster_sats else -1, d))
    ResultTable("association", rows).write(out, prov)


def cmd_train(sc: Scenario, args, prov: Provenance, out: Path) -> None:
    system = SystemModel(sc)
    rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 0x7A1]))
    hyper = bcd.hyper_from(system)
    steps = sc.mappo.train_steps if args.steps is None else args.steps
    routing = bcd.routing_env(system)
    phases = bcd.phase_envs(system, system.bfs_paths())
    if args.agent == "routing":
        env = routing
    elif args.agent == "phase":
        if not phases:
            raise ValueError("no routed RUE to train a phase agent on")
        env = phases[sorted(phases)[0]]
    else:
        env = mappo.JointEnv(routing, phases)
    obs = env.reset(rng)
    agents = mappo.make_agents(env, obs, hyper, rng, routing_reward_scale=sc.mappo.routing_reward_scale)
    res = mappo.train(env, agents, hyper, steps, rng)
    if res.diverged:
        raise FloatingPointError("training diverged: non-finite reward")
    ResultTable("learning_curve", [(r.iter, r.agent, r.reward_mean, r.reward_std, r.value_loss, r.policy_loss)
                                   for r in res.curve]).write(out, prov)
    for aid, agent in res.agents.items():
        extras = agent.head.log_std if agent.spec.kind == "phase" else None
        lk.save_checkpoint(out / f"actor_{aid}.ckpt", agent.actor, extras)
        lk.save_checkpoint(out / f"critic_{aid}.ckpt", agent.critic)


def cmd_geometry(sc: Scenario, args, prov: Provenance, out: Path) -> None:
    system = SystemModel(sc)
    rows = []
    for slot in range(args.slot, args.slot + args.slots):
        state = system.constellation.state(slot)
        for i, p in enumerate(state.positions):
            elev = elevation_angle(system.aoi_center, p, system.consts)
            rows.append((slot, int(state.plane_of[i]), int(state.index_in_plane[i]), float(p[0]), float(p[1]),
                         float(p[2]), float(state.anomalies_rad[i]), i, math.degrees(elev),
                         bool(elev >= system.min_elev)))
    ResultTable("geometry", rows).write(out, prov)
    _write_association(system, out, prov)


def cmd_linkbudget(sc: Scenario, args, prov: Provenance, out: Path) -> None:
    system = SystemModel(sc)
    c = sc.channel
    d_bs = sc.constellation.altitude_m if args.d_bs is None else args.d_bs
    d_su = sc.constellation.altitude_m if args.d_su is None else args.d_su
    budget = total_loss(system.loss_cfg, d_bs, args.d_ss, d_su,
                        gbs_gain=10 ** (c.gbs_gain_dbi / 10), rue_gain=10 ** (c.rue_gain_dbi / 10),
                        num_elements=sc.ris.num_elements,
                        element_size_m=(sc.ris.element_size_m, sc.ris.element_size_m),
                        amplitude=sc.ris.amplitude, consts=system.consts)
    rows = [*budget.components(), ("total_db", budget.total_db)]
    ResultTable("linkbudget", rows).write(out, prov)


def cmd_sweep(sc: Scenario, args, prov: Provenance, out: Path) -> None:
    grid = None if args.grid is None else [float(x) for x in args.grid.split(",") if x.strip()]
    if grid is not None and args.kind in ("ris_elements", "batch_size"):
        grid = [int(x) for x in grid]
    seeds = list(range(sc.seed, sc.seed + args.seeds))
    table = sweeps.sweep(args.kind, sc, grid=grid, seeds=seeds, workers=args.workers)
    table.write(out, prov)


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "geometry": cmd_geometry,
            "linkbudget": cmd_linkbudget, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file (defaults when omitted)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--out", default="out", help="output directory (default ./out)")

    p = argparse.ArgumentParser(prog="spaceris", description="LEO RIS sub-THz network simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the block coordinate descent solver")
    t = sub.add_parser("train", parents=[common], help="train routing and phase agents")
    t.add_argument("--agent", choices=("joint", "routing", "phase"), default="joint")
    t.add_argument("--steps", type=int, help="override mappo.train_steps")
    g = sub.add_parser("geometry", parents=[common], help="constellation snapshot and association")
    g.add_argument("--slot", type=int, default=0, help="first slot (default 0)")
    g.add_argument("--slots", type=int, default=1, help="number of consecutive slots (default 1)")
    lb = sub.add_parser("linkbudget", parents=[common], help="loss decomposition of one cascaded link")
    lb.add_argument("--d-bs", type=float, help="GBS to satellite distance, m (default: altitude)")
    lb.add_argument("--d-ss", type=float, help="inter-satellite distance, m (default: single satellite)")
    lb.add_argument("--d-su", type=float, help="satellite to RUE distance, m (default: altitude)")
    s = sub.add_parser("sweep", parents=[common], help="rate, latency or batch-size sweep")
    s.add_argument("--kind", choices=sweeps.KINDS, required=True)
    s.add_argument("--grid", help="comma-separated grid values (default: built-in grid)")
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds from --seed")
    return p


def main(argv=None) -> int:
    level = os.environ.get("SPACERIS_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        return _fail(EXIT_USAGE, "usage", "--workers must be at least 1")
    if args.config and not Path(args.config).is_file():
        return _fail(EXIT_USAGE, "missing-config", f"config file not found: {args.config}", path=args.config)
    try:
        sc = _load(args)
    except ConfigError as exc:
        sys.stderr.write(json.dumps(exc.to_json()) + "\n")
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prov = Provenance(config_hash(sc), sc.seed, args.workers)
    try:
        COMMANDS[args.command](sc, args, prov, out)
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        return _fail(1, type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
