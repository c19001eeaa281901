"""Train the phase-shift and routing agents on small problems.

The phase agent learns one surface configuration on a fixed line-of-sight
cascade; the routing agent learns to forward packets on a 3x4 ISL grid.
Run: python demos/train_agents.py  (about a minute on one core)
"""

import math

import numpy as np

from spaceris import mappo
from spaceris.channel import CascadeChannel, LossConfig, los_hop, panel_offsets, total_loss, ula_offsets
from spaceris.geometry import Constellation, walker_planes

n = 8
ris = np.array([0.0, 0.0, 500e3])
elems = panel_offsets(n, (1.5e-3, 1.5e-3), [0, 0, -1])
h = los_hop(ris, elems, np.zeros(3), ula_offsets(1, 1.5e-3, [0, 0, 1]), 3e-3) / math.sqrt(n)
g = los_hop(np.array([2e5, 0, 0]), np.zeros((1, 3)), ris, elems, 3e-3)[0] / math.sqrt(n)
env = mappo.PhaseEnv(CascadeChannel([h], g), total_loss(LossConfig(), 5e5, None, 5e5, num_elements=n), [n])

rng = np.random.default_rng(0)
res = mappo.train(env, None, mappo.PpoHyper(), 20_000, rng)
for row in res.curve[::10]:
    print(f"phase iter {row.iter:3d}: mean reward {row.reward_mean:.3f}")
print(f"greedy phases reach {mappo.evaluate_phase(env, res.agents['PS']):.3f} of the coherent bound\n")

grid = Constellation(walker_planes(3, 4, 500e3, math.radians(53), 0, math.radians(30)))
renv = mappo.RoutingEnv(grid, math.radians(12))
res = mappo.train(renv, None, mappo.PpoHyper(), 30_000, np.random.default_rng(0))
share, rows = mappo.evaluate_routing(renv, res.agents["RO"], np.random.default_rng(1), episodes=100)
print(f"routing: {share:.0%} of episodes within one hop of the shortest path")
for hops, best, ok in rows[:5]:
    print(f"  took {hops} hops, shortest {best}, delivered={ok}")
