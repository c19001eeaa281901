"""Two-agent PPO with centralized critics: packet routing (RO) and RIS phase shift (PS)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import learnkit as lk
from .channel import CascadeChannel, LinkBudget, RisPanel, coherent_bound, effective_gain
from .constants import ACTOR_HIDDEN, CRITIC_HIDDEN, DISCOUNT, LEARNING_RATE
from .geometry import Constellation, subsatellite_point
from .netsim import DELIVER, NUM_ACTIONS, Packet, RoutingWorld, TrafficConfig, bfs_distance
from .results import write_rows

D_SCALE_M = 1e6
EPS_R = 1e-3
TWO_PI = 2.0 * math.pi


@dataclass
class PpoHyper:
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
    actor_hidden: tuple = ACTOR_HIDDEN
    critic_hidden: tuple = CRITIC_HIDDEN

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma must lie in (0, 1] and lambda in [0, 1]")
        if self.clip_eps <= 0 or self.epochs < 1 or self.minibatch < 1:
            raise ValueError("invalid PPO hyper-parameters")


@dataclass
class AgentSpec:
    id: str
    obs_dim: int
    global_obs_dim: int
    kind: str  # "categorical" (factorized, per packet) or "phase"
    num_slots: int = 1  # packets for RO, elements for PS
    reward_scale: float = 1.0
    center_inputs: bool = False  # map [0, 1] features to [-1, 1] before the actor
    entropy_coef: float | None = None  # overrides the shared coefficient


class Agent:
    """Actor on the local observation, critic on the concatenated global one."""

    def __init__(self, spec: AgentSpec, hyper: PpoHyper, rng: np.random.Generator,
                 init_log_std: float = math.log(0.5)):
        self.spec = spec
        self.hyper = hyper
        if spec.kind == "categorical":
            out_dim = spec.num_slots * NUM_ACTIONS
            self.head = lk.CategoricalHead()
        elif spec.kind == "phase":
            out_dim = spec.num_slots
            self.head = lk.GaussianHead(dim=out_dim, log_std=np.full(out_dim, init_log_std),
                                        low=0.0, high=TWO_PI, wrap=True)
        else:
            raise ValueError(f"unknown agent kind {spec.kind!r}")
        self.actor = lk.Mlp([spec.obs_dim, *hyper.actor_hidden, out_dim], rng, out_scale=0.1)
        self.critic = lk.Mlp([spec.global_obs_dim, *hyper.critic_hidden, 1], rng)
        self.actor_opt = lk.AdamState(lr=hyper.lr)
        self.critic_opt = lk.AdamState(lr=hyper.lr)

    # parameters touched by the actor optimizer
    def actor_params(self) -> list[np.ndarray]:
        if self.spec.kind == "phase":
            return self.actor.params + [self.head.log_std]
        return self.actor.params

    def snapshot(self):
        return ([p.copy() for p in self.actor_params()], [p.copy() for p in self.critic.params])

    def restore(self, snap):
        for p, q in zip(self.actor_params(), snap[0]):
            p[...] = q
        for p, q in zip(self.critic.params, snap[1]):
            p[...] = q

    # -- distribution helpers -------------------------------------------------
    def phase_mean(self, out):
        return math.pi * (1.0 + np.tanh(out))

    def actor_input(self, obs):
        obs = np.asarray(obs, dtype=float)
        return 2.0 * obs - 1.0 if self.spec.center_inputs else obs

    def act(self, obs, rng, mask=None, deterministic=False):
        out = self.actor.forward(self.actor_input(obs))
        if self.spec.kind == "categorical":
            logits = out.reshape(self.spec.num_slots, NUM_ACTIONS)
            if deterministic:
                a = self.head.mode(logits, mask)
                lp, _ = self.head.logprob_and_grad(logits, a, mask)
                return a, float(lp.sum())
            a, lp = self.head.sample(logits, rng, mask)
            return a, float(lp.sum())
        mean = self.phase_mean(out)
        if deterministic:
            return mean.copy(), float(self.head.logprob(mean, mean))
        raw, lp = self.head.sample(mean, rng)
        return raw, float(lp)

    def executed(self, action):
        """Action as applied in the environment (phases wrapped to [0, 2*pi))."""
        if self.spec.kind == "phase":
            return self.head.bound(action)
        return action

    def logprob_batch(self, obs, actions, masks=None):
        out = self.actor.forward(self.actor_input(obs))
        if self.spec.kind == "categorical":
            logits = out.reshape(len(obs), self.spec.num_slots, NUM_ACTIONS)
            lp, _ = self.head.logprob_and_grad(logits, actions, masks)
            return lp.sum(axis=1)
        return self.head.logprob(self.phase_mean(out), actions)

    def value(self, global_obs):
        return self.critic.forward(global_obs)[..., 0]


# -- observations and rewards -------------------------------------------------

def grid_coords(constellation: Constellation, node: int) -> tuple[float, float]:
    sizes = constellation.plane_sizes
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    m = int(np.searchsorted(offsets, node, side="right") - 1)
    k = node - offsets[m]
    px = m / (len(sizes) - 1) if len(sizes) > 1 else 0.0
    py = k / (sizes[m] - 1) if sizes[m] > 1 else 0.0
    return float(px), float(py)


def routing_observe(world: RoutingWorld, packets: Sequence[Packet], p_max: int) -> np.ndarray:
    """Five features per packet slot: current node, destination satellite, active flag."""
    obs = np.zeros(p_max * 5)
    for i, p in enumerate(packets[:p_max]):
        if not p.active:
            continue
        tg = world.targets(p.dest_rue)
        if not tg:
            continue
        obs[5 * i:5 * i + 2] = grid_coords(world.constellation, p.current_node)
        obs[5 * i + 2:5 * i + 4] = grid_coords(world.constellation, tg[0])
        obs[5 * i + 4] = 1.0
    return obs


def routing_reward(remaining_m: Sequence[float], delivered: int = 0) -> float:
    """Mean over packets of 1/(rem/d_scale + eps_r); a delivery counts the cap 1/eps_r."""
    terms = [1.0 / (r / D_SCALE_M + EPS_R) for r in remaining_m] + [1.0 / EPS_R] * delivered
    return float(np.mean(terms)) if terms else 0.0


def ps_observe(budget: LinkBudget, gamma_prev: float, dist_scale_m: float = 1e7) -> np.ndarray:
    gamma_db = 10.0 * math.log10(max(gamma_prev, 1e-30))
    d_bs, d_ss, d_su = budget.distances
    return np.array([budget.total_db / 300.0, gamma_db / 60.0,
                     d_bs / dist_scale_m, d_ss / dist_scale_m, d_su / dist_scale_m])


def ps_reward(cascade: CascadeChannel, panels: Sequence[RisPanel]) -> float:
    """Effective channel power relative to its coherent bound, in (0, 1]."""
    bound = coherent_bound(cascade, panels[0].amplitude if panels else 1.0)
    if bound <= 0:
        return 0.0
    return min(effective_gain(cascade, panels) / bound, 1.0)


# -- advantage estimation and updates -----------------------------------------

def gae(rewards, values, dones, last_value: float, gamma: float, lam: float):
    """Generalized advantage estimation.

    ``dones[t]`` marks that step ``t`` ended its episode, so no bootstrap
    crosses it. Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    acc = 0.0
    for t in reversed(range(n)):
        next_v = last_value if t == n - 1 else values[t + 1]
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_v * live - values[t]
        acc = delta + gamma * lam * live * acc
        adv[t] = acc
    return adv, adv + values


def clipped_objective(ratio, adv, eps: float):
    """Per-sample min(r A, clip(r, 1-eps, 1+eps) A)."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


@dataclass
class Batch:
    obs: np.ndarray
    global_obs: np.ndarray
    actions: np.ndarray
    logprobs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    masks: np.ndarray | None = None


def _policy_grads(agent: Agent, obs, actions, masks, coef, ent_coef):
    """Gradients of sum_i coef_i*logp_i + ent_coef*entropy, to be *descended*."""
    out, acts = agent.actor.forward_cache(agent.actor_input(obs))
    n = len(obs)
    if agent.spec.kind == "categorical":
        logits = out.reshape(n, agent.spec.num_slots, NUM_ACTIONS)
        _, g_lp = agent.head.logprob_and_grad(logits, actions, masks)
        ent, g_ent = agent.head.entropy_and_grad(logits, masks)
        up = coef[:, None, None] * g_lp - (ent_coef / n) * g_ent
        grads = agent.actor.backward(acts, up.reshape(n, -1))
        return grads, float(ent.sum(axis=1).mean())
    mean = agent.phase_mean(out)
    _, g_mean, g_logstd = agent.head.logprob_and_grad(mean, actions)
    dmean_dout = math.pi * (1.0 - np.tanh(out) ** 2)
    up = coef[:, None] * g_mean * dmean_dout
    grads = agent.actor.backward(acts, up)
    g_ls = (coef[:, None] * g_logstd).sum(axis=0) - ent_coef * np.ones_like(agent.head.log_std)
    return grads + [g_ls], agent.head.entropy()


def ppo_update(agent: Agent, batch: Batch, rng: np.random.Generator) -> dict:
    """Clipped-surrogate actor update plus critic regression over epochs x minibatches."""
    h = agent.hyper
    ent_coef = h.entropy_coef if agent.spec.entropy_coef is None else agent.spec.entropy_coef
    n = len(batch.obs)
    adv = batch.advantages
    std = adv.std()
    adv = (adv - adv.mean()) / (std if std > 1e-12 else 1.0)
    snap = agent.snapshot()
    opt_state = (_copy_adam(agent.actor_opt), _copy_adam(agent.critic_opt))
    pol_losses, val_losses, first_ratios = [], [], None
    for epoch in range(h.epochs):
        order = rng.permutation(n)
        for start in range(0, n, h.minibatch):
            idx = order[start:start + h.minibatch]
            m = None if batch.masks is None else batch.masks[idx]
            lp = agent.logprob_batch(batch.obs[idx], batch.actions[idx], m)
            ratio = np.exp(lp - batch.logprobs[idx])
            if epoch == 0 and start == 0:
                first_ratios = ratio.copy()
            a = adv[idx]
            clipped = np.clip(ratio, 1.0 - h.clip_eps, 1.0 + h.clip_eps)
            surr = np.minimum(ratio * a, clipped * a)
            loss = -float(surr.mean())
            if not math.isfinite(loss):
                agent.restore(snap)
                agent.actor_opt, agent.critic_opt = opt_state
                return {"policy_loss": math.nan, "value_loss": math.nan, "aborted": True,
                        "first_ratios": first_ratios}
            active = (ratio * a <= clipped * a).astype(float)
            coef = -(active * ratio * a) / len(idx)
            grads, ent = _policy_grads(agent, batch.obs[idx], batch.actions[idx], m, coef, ent_coef)
            lk.adam_step(agent.actor_opt, agent.actor_params(), grads)
            pol_losses.append(loss - ent_coef * ent)
            val_losses.append(value_update(agent, batch.global_obs[idx], batch.returns[idx]))
    return {"policy_loss": float(np.mean(pol_losses)), "value_loss": float(np.mean(val_losses)),
            "aborted": False, "first_ratios": first_ratios}


def _copy_adam(s: lk.AdamState) -> lk.AdamState:
    return lk.AdamState(lr=s.lr, beta1=s.beta1, beta2=s.beta2, eps=s.eps, step=s.step,
                        m=[x.copy() for x in s.m], v=[x.copy() for x in s.v])


def value_update(agent: Agent, global_obs, returns) -> float:
    """One Adam step on the mean squared error of the critic; returns the pre-step loss."""
    out, acts = agent.critic.forward_cache(global_obs)
    err = out[:, 0] - returns
    loss = float(np.mean(err**2))
    up = (2.0 / len(err)) * err[:, None]
    lk.adam_step(agent.critic_opt, agent.critic.params, agent.critic.backward(acts, up))
    return loss


# -- environments ------------------------------------------------------------------

class MultiAgentEnv(Protocol):
    agent_ids: tuple

    def reset(self, rng) -> dict: ...
    def masks(self) -> dict: ...
    def step(self, actions: dict): ...


class PhaseEnv:
    """A fixed cascade; each step the PS agent picks every RIS phase."""

    agent_ids = ("PS",)

    def __init__(self, cascade: CascadeChannel, budget: LinkBudget, num_elements: Sequence[int],
                 snr_scale: float = 1.0, episode_len: int = 16):
        self.cascade = cascade
        self.budget = budget
        self.num_elements = list(num_elements)
        self.snr_scale = snr_scale
        self.episode_len = episode_len
        self.bound = coherent_bound(cascade)

    @property
    def action_dim(self) -> int:
        return sum(self.num_elements)

    def panels(self, phases) -> list[RisPanel]:
        out, k = [], 0
        for n in self.num_elements:
            out.append(RisPanel(n, phases_rad=phases[k:k + n]))
            k += n
        return out

    def obs(self):
        return ps_observe(self.budget, self.gamma_prev)

    def reset(self, rng):
        self.t = 0
        self.gamma_prev = 0.0
        return {"PS": self.obs()}

    def masks(self):
        return {"PS": None}

    def step(self, actions):
        panels = self.panels(np.mod(actions["PS"], TWO_PI))
        r = ps_reward(self.cascade, panels)
        self.gamma_prev = self.snr_scale * r * self.bound
        self.t += 1
        return {"PS": self.obs()}, {"PS": r}, self.t >= self.episode_len


class RoutingEnv:
    """Random source/destination satellites on a frozen grid; one RUE under each destination."""

    agent_ids = ("RO",)

    def __init__(self, constellation: Constellation, min_elev_rad: float, p_max: int = 1,
                 max_steps: int = 12, slot: int = 0):
        self.constellation = constellation
        self.min_elev = min_elev_rad
        self.p_max = p_max
        self.max_steps = max_steps
        self.slot = slot
        self.traffic = TrafficConfig(psi_max_s=1e9, arrival_rate=0.0)

    def reset(self, rng, pairs: Sequence[tuple[int, int]] | None = None):
        n = self.constellation.num_sats
        if pairs is None:
            pairs = [(int(rng.integers(n)), int(rng.integers(n))) for _ in range(self.p_max)]
        self.pairs = list(pairs)
        pos = self.constellation.state(self.slot).positions
        rues = np.array([subsatellite_point(pos[d]) for _, d in pairs])
        gbs = np.array([subsatellite_point(pos[s]) for s, _ in pairs])
        self.world = RoutingWorld(self.constellation, gbs, rues, self.min_elev, self.traffic,
                                  serving_sat={k: d for k, (_, d) in enumerate(pairs)},
                                  freeze_topology=True, start_slot=self.slot)
        self.packets = []
        for k, (s, _) in enumerate(pairs):
            p = Packet(id=k, source_gbs=k, dest_rue=k, size_bits=0.0, created_slot=self.slot)
            self.packets.extend(self.world.inject([p], source_sat=s))
        self.bfs = [bfs_distance(self.world.adjacency, s, d) for s, d in pairs]
        self.t = 0
        return {"RO": self.obs()}

    def obs(self):
        return routing_observe(self.world, self.packets, self.p_max)

    def masks(self):
        m = np.zeros((self.p_max, NUM_ACTIONS), dtype=bool)
        for i in range(self.p_max):
            if i < len(self.packets) and self.packets[i].active:
                m[i] = self.world.legal_actions(self.packets[i])
            else:
                m[i, DELIVER] = True  # placeholder, single choice carries no log-prob
        return {"RO": m}

    def step(self, actions):
        a = actions["RO"]
        acts = {p.id: int(a[i]) for i, p in enumerate(self.packets) if p.active}
        rem, delivered = self.world.step(acts)
        r = routing_reward(list(rem.values()), len(delivered))
        self.t += 1
        done = self.t >= self.max_steps or not any(p.active for p in self.packets)
        return {"RO": self.obs()}, {"RO": r}, done


class JointEnv:
    """One routing world and one or more phase worlds stepped together.

    ``phases`` is a single :class:`PhaseEnv` (agent id ``PS``) or a mapping
    from agent id to environment. Critics see every agent's observation.
    """

    def __init__(self, routing: RoutingEnv, phases):
        self.routing = routing
        self.phases = {"PS": phases} if isinstance(phases, PhaseEnv) else dict(phases)
        self.agent_ids = ("RO", *self.phases)

    def sub_env(self, aid):
        return self.routing if aid == "RO" else self.phases[aid]

    def reset(self, rng):
        out = dict(self.routing.reset(rng))
        for aid, env in self.phases.items():
            out[aid] = env.reset(rng)["PS"]
        return out

    def masks(self):
        return {"RO": self.routing.masks()["RO"], **{aid: None for aid in self.phases}}

    def step(self, actions):
        obs, rew, done = self.routing.step({"RO": actions["RO"]})
        obs, rew = dict(obs), dict(rew)
        for aid, env in self.phases.items():
            o, r, d = env.step({"PS": actions[aid]})
            if d and not done:
                o = env.reset(None)
            obs[aid], rew[aid] = o["PS"], r["PS"]
        return obs, rew, done


def make_agents(env, obs: dict, hyper: PpoHyper, rng: np.random.Generator,
                routing_reward_scale: float = 1e-3) -> dict[str, Agent]:
    gdim = sum(len(obs[i]) for i in env.agent_ids)
    agents = {}
    for aid in env.agent_ids:
        sub = env.sub_env(aid) if isinstance(env, JointEnv) else env
        if aid == "RO":
            spec = AgentSpec("RO", len(obs[aid]), gdim, "categorical", sub.p_max, routing_reward_scale,
                             center_inputs=True, entropy_coef=hyper.routing_entropy_coef)
        else:
            spec = AgentSpec(aid, len(obs[aid]), gdim, "phase", sub.action_dim)
        agents[aid] = Agent(spec, hyper, rng)
    return agents


@dataclass
class CurveRow:
    iter: int
    agent: str
    reward_mean: float
    reward_std: float
    value_loss: float
    policy_loss: float


@dataclass
class TrainResult:
    agents: dict
    curve: list[CurveRow] = field(default_factory=list)
    steps: int = 0
    diverged: bool = False


def train(env, agents: dict[str, Agent] | None, hyper: PpoHyper, total_steps: int,
          rng: np.random.Generator) -> TrainResult:
    """Roll out ``rollout_steps`` joint steps, then update every agent; repeat."""
    obs = env.reset(rng)
    if agents is None:
        agents = make_agents(env, obs, hyper, rng)
    ids = env.agent_ids
    result = TrainResult(agents=agents)
    it = 0
    while result.steps < total_steps:
        n = min(hyper.rollout_steps, total_steps - result.steps)
        buf = {a: {"obs": [], "gobs": [], "act": [], "lp": [], "rew": [], "val": [], "mask": []} for a in ids}
        dones = []
        for _ in range(n):
            gobs = np.concatenate([obs[a] for a in ids])
            masks = env.masks()
            actions = {}
            for a in ids:
                ag = agents[a]
                act, lp = ag.act(obs[a], rng, masks[a])
                b = buf[a]
                b["obs"].append(obs[a])
                b["gobs"].append(gobs)
                b["act"].append(act)
                b["lp"].append(lp)
                b["val"].append(float(ag.value(gobs)))
                b["mask"].append(masks[a])
                actions[a] = ag.executed(act)
            obs, rew, done = env.step(actions)
            for a in ids:
                buf[a]["rew"].append(rew[a])
            dones.append(done)
            if done:
                obs = env.reset(rng)
        result.steps += n
        gobs = np.concatenate([obs[a] for a in ids])
        for a in ids:
            ag = agents[a]
            b = buf[a]
            raw = np.array(b["rew"])
            if not np.all(np.isfinite(raw)):
                result.diverged = True
                return result
            adv, ret = gae(raw * ag.spec.reward_scale, b["val"], dones, float(ag.value(gobs)),
                           hyper.gamma, hyper.gae_lambda)
            masks = None if b["mask"][0] is None else np.array(b["mask"])
            batch = Batch(np.array(b["obs"]), np.array(b["gobs"]), np.array(b["act"]),
                          np.array(b["lp"]), adv, ret, masks)
            stats = ppo_update(ag, batch, rng)
            result.curve.append(CurveRow(it, a, float(raw.mean()), float(raw.std()),
                                         stats["value_loss"], stats["policy_loss"]))
        it += 1
    return result


def evaluate_routing(env: RoutingEnv, agent: Agent, rng: np.random.Generator, episodes: int = 100,
                     slack: int = 1) -> tuple[float, list[tuple[int, int, bool]]]:
    """Share of episodes delivered within ``slack`` ISL hops of the BFS distance (greedy policy)."""
    rows = []
    for _ in range(episodes):
        obs = env.reset(rng)
        done = False
        while not done:
            a, _ = agent.act(obs["RO"], rng, env.masks()["RO"], deterministic=True)
            obs, _, done = env.step({"RO": a})
        p = env.packets[0]
        rows.append((p.isl_hops, env.bfs[0], p.delivered_slot is not None))
    ok = sum(1 for hops, best, dv in rows if dv and hops <= best + slack)
    return ok / episodes, rows


def evaluate_phase(env: PhaseEnv, agent: Agent) -> float:
    env.reset(None)
    mean, _ = agent.act(env.obs(), None, deterministic=True)
    return ps_reward(env.cascade, env.panels(np.mod(mean, TWO_PI)))


def write_curve(path, rows: Sequence[CurveRow], prov=None) -> None:
    write_rows(path, "learning_curve",
               [(r.iter, r.agent, r.reward_mean, r.reward_std, r.value_loss, r.policy_loss) for r in rows], prov)
