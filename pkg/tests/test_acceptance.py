"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the measured
values, then asserts. Run with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import math
import time

import numpy as np
from scipy.sparse.csgraph import shortest_path

from spaceris import mappo, sweeps
from spaceris import learnkit as lk
from spaceris.association import bkmc, hungarian_assign
from spaceris.channel import LossConfig, RisPanel, coherent_phases, snr, total_loss, weather_loss_db
from spaceris.cli import main
from spaceris.geometry import (
    OrbitalPlane, coverage, elevation_from_range, link_distance, orbital_period, slant_range,
)
from spaceris.netsim import bfs_distance
from spaceris.scenario import parse_config, with_overrides
from spaceris.system import SystemModel
from spaceris.bcd import woa_hyper
from spaceris.woa import WoaHyper, optimize

from conftest import CONFIGS, MIN_ELEV, grid_constellation
from test_channel import los_cascade
from test_learnkit import USED_SHAPES
from test_mappo import _batch, _routing_agent

H = 500e3


def report(capsys, n, checks):
    ok = all(v for v, _ in checks.values())
    detail = "; ".join(f"{k}={d}" for k, (_, d) in checks.items())
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    failed = [k for k, (v, _) in checks.items() if not v]
    assert not failed, f"criterion {n} failed: {failed}"


def test_criterion_1_geometry(capsys):
    t = time.perf_counter()
    plane = OrbitalPlane(0.0, 0.0, 1, H)
    period = orbital_period(plane)
    beta = math.degrees(coverage(plane, math.radians(12))[0])
    overhead = link_distance("gbs-sat", None, math.pi / 2, altitude_m=H)
    trip = max(abs(elevation_from_range(slant_range(a, H), H) - a) for a in np.linspace(0, math.pi / 2, 91))
    dt = time.perf_counter() - t
    report(capsys, 1, {
        "period_s": (abs(period - 5677) <= 10, f"{period:.2f}"),
        "beta_deg": (abs(beta - 12.94) <= 0.01, f"{beta:.4f}"),
        "overhead_slant_m": (abs(overhead - H) < 1e-6, f"{overhead:.6f}"),
        "round_trip": (trip < 1e-9, f"{trip:.1e}"),
        "runtime_s": (dt < 1.0, f"{dt:.3f}"),
    })


def test_criterion_2_link_budget(capsys):
    from spaceris.channel import absorption_loss_db, spreading_loss_db
    from spaceris.channel import RainConfig
    t = time.perf_counter()
    fspl = spreading_loss_db(0.1e12, 1000e3)
    kappa0 = absorption_loss_db(0.0, 1000e3)
    rain = weather_loss_db(LossConfig(rain=RainConfig(0.8, 0.7, 10.0, 2.0)))[0]
    worst = 0.0
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = rng.uniform(1e4, 2e6, 3)
        b = total_loss(LossConfig(), d[0], d[1], d[2], gbs_gain=1e5, rue_gain=1e4, num_elements=int(rng.integers(1, 65)))
        worst = max(worst, abs(sum(v for _, v in b.components()) - b.total_db))
    dt = time.perf_counter() - t
    report(capsys, 2, {
        "fspl_db": (abs(fspl - 192.45) <= 0.01, f"{fspl:.4f}"),
        "kappa0_db": (kappa0 == 0.0, kappa0),
        "rain_db": (abs(rain - 8.02) <= 0.01, f"{rain:.4f}"),
        "decomposition": (worst < 1e-9, f"{worst:.1e}"),
        "runtime_s": (dt < 1.0, f"{dt:.3f}"),
    })


def test_criterion_3_ris_gain(capsys):
    cfg = LossConfig()
    snrs = []
    for n in (1, 2, 4, 8):
        cas = los_cascade(n)
        panel = RisPanel(n, phases_rad=coherent_phases(cas.hops, cas.terminal)[0])
        snrs.append(10 * math.log10(snr(cas, [panel], total_loss(cfg, 5e5, None, 5e5, num_elements=n), 1.0,
                                        noise_w=1e-30)))
    steps = np.diff(snrs)

    t = time.perf_counter()
    cas = los_cascade(8)
    env = mappo.PhaseEnv(cas, total_loss(cfg, 5e5, None, 5e5, num_elements=8), [8])
    res = mappo.train(env, None, mappo.PpoHyper(), 50_000, np.random.default_rng(0))
    frac = mappo.evaluate_phase(env, res.agents["PS"])
    dt = time.perf_counter() - t
    report(capsys, 3, {
        "snr_steps_db": (bool(np.all(np.abs(steps - 6.02) <= 0.01)), np.round(steps, 4).tolist()),
        "ps_fraction": (frac >= 0.8, f"{frac:.4f}"),
        "ps_runtime_s": (dt < 600, f"{dt:.1f}"),
    })


def test_criterion_4_routing(capsys):
    cons = grid_constellation()
    env = mappo.RoutingEnv(cons, MIN_ELEV)
    env.reset(None, pairs=[(0, 0)])
    adj = env.world.adjacency
    n = cons.num_sats
    graph = np.zeros((n, n))
    for i, nbrs in adj.items():
        graph[i, list(nbrs)] = 1
    apsp = shortest_path(graph, unweighted=True)
    bfs_ok = all(bfs_distance(adj, s, d) == apsp[s, d] for s in range(n) for d in range(n))

    t = time.perf_counter()
    res = mappo.train(env, None, mappo.PpoHyper(), 50_000, np.random.default_rng(0))
    share, _ = mappo.evaluate_routing(env, res.agents["RO"], np.random.default_rng(1000), episodes=100)
    dt = time.perf_counter() - t
    report(capsys, 4, {
        "bfs_exhaustive": (bfs_ok, f"{n * n} pairs"),
        "within_one_hop": (share >= 0.9, f"{share:.2f}"),
        "runtime_s": (True, f"{dt:.1f}"),
    })


def test_criterion_5_hungarian_bkmc(capsys):
    rng = np.random.default_rng(0)
    hung = 0
    for _ in range(100):
        cost = rng.uniform(0, 100, (6, 6))
        _, total = hungarian_assign(cost)
        brute = min(cost[np.arange(6), list(p)].sum() for p in itertools.permutations(range(6)))
        hung += abs(total - brute) < 1e-9
    balanced = monotone = 0
    for _ in range(1000):
        s = int(rng.integers(1, 7))
        pts = rng.uniform(-1e5, 1e5, (s + int(rng.integers(0, 20)), 2))
        st = bkmc(pts, rng.uniform(-1e5, 1e5, (s, 2)))
        sizes = np.bincount(st.assignment, minlength=s)
        balanced += sizes.max() - sizes.min() <= 1
        monotone += all(b <= a * (1 + 1e-12) + 1e-9 for a, b in zip(st.mse_trace, st.mse_trace[1:]))
    report(capsys, 5, {
        "hungarian": (hung == 100, f"{hung}/100"),
        "balanced": (balanced == 1000, f"{balanced}/1000"),
        "mse_monotone": (monotone == 1000, f"{monotone}/1000"),
    })


def test_criterion_6_learnkit(capsys):
    rng = np.random.default_rng(7)
    fd = max(lk.gradient_check(lk.Mlp(d, rng), rng.normal(size=(4, d[0])), rng.normal(size=(4, d[-1])),
                               samples=20, rng=rng) for d in USED_SHAPES)
    rng = np.random.default_rng(3)
    env, agent = _routing_agent(rng)
    ratios = mappo.ppo_update(agent, _batch(env, agent, rng), rng)["first_ratios"]
    ratio_err = float(np.max(np.abs(ratios - 1.0)))
    td = mc = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 40))
        r, v, last = rng.normal(size=n), rng.normal(size=n), float(rng.normal())
        dones = rng.random(n) < 0.2
        nxt = np.append(v[1:], last) * ~dones
        td = max(td, np.max(np.abs(mappo.gae(r, v, dones, last, 0.95, 0.0)[0] - (r + 0.95 * nxt - v))))
        ret, acc = np.zeros(n), last
        for t in reversed(range(n)):
            acc = r[t] + 0.95 * (0.0 if dones[t] else acc)
            ret[t] = acc
        mc = max(mc, np.max(np.abs(mappo.gae(r, v, dones, last, 0.95, 1.0)[0] - (ret - v))))
    report(capsys, 6, {
        "fd_rel_err": (fd < 1e-4, f"{fd:.1e}"),
        "ratio_identity": (ratio_err <= 1e-12, f"{ratio_err:.1e}"),
        "gae_td": (td < 1e-9, f"{td:.1e}"),
        "gae_mc": (mc < 1e-9, f"{mc:.1e}"),
    })


def test_criterion_7_woa(capsys):
    hits, monotone = 0, True
    for seed in range(10):
        rng = np.random.default_rng(seed)
        target = rng.uniform(0, 10, 3)
        res = optimize(lambda x: float(np.sum((x - target) ** 2)), 3, 0, 10, WoaHyper(pop_size=30, max_iters=500),
                       rng)
        hits += np.max(np.abs(res.best - target)) <= 1e-2
        best = [row[1] for row in res.trace]
        monotone &= all(b <= a for a, b in zip(best, best[1:]))
    sc = parse_config(CONFIGS / "desk.json")
    wins = viol = 0
    for seed in range(50):
        system = SystemModel(with_overrides(sc, seed=seed))
        k, active = system.kappa(system.bfs_paths(), [0], "coherent")
        prob = system.power_problem(k, active)
        res = prob.solve(woa_hyper(system), np.random.default_rng(np.random.SeedSequence([seed, 7])))
        wins += res.best_fitness < prob.fitness(prob.uniform())
        viol += prob.violations(res.best)
    report(capsys, 7, {
        "sphere": (hits == 10, f"{hits}/10"),
        "monotone_trace": (monotone, monotone),
        "beats_uniform": (wins >= 40, f"{wins}/50"),
        "violations": (viol == 0, viol),
    })


def _pairwise_p(per_seed, keys, sign):
    """Worst sign-test p over consecutive grid pairs; ``sign`` +1 tests increase."""
    return max(sweeps.sign_test([sign * (row[b] - row[a]) for row in per_seed.values()])
               for a, b in zip(keys, keys[1:]))


def test_criterion_8_desk_trends(capsys):
    sc = parse_config(CONFIGS / "desk.json")
    seeds = list(range(20))
    t = time.perf_counter()
    dist = sweeps.sweep("distance", sc, seeds=seeds).rows
    nr = sweeps.sweep("ris_elements", sc, seeds=seeds).rows
    lat = sweeps.sweep("packet_size", sc, seeds=seeds).rows
    dt = time.perf_counter() - t

    dgrid = sweeps.DEFAULT_GRIDS["distance"]
    ngrid = sweeps.DEFAULT_GRIDS["ris_elements"]
    sgrid = sweeps.DEFAULT_GRIDS["packet_size"]
    p_dist = max(_pairwise_p(sweeps.by_seed(dist, 1, 3, lambda r, s=s: r[0] == s), dgrid, -1)
                 for s in sweeps.SCHEMES)
    ris = sweeps.by_seed(dist, 1, 3, lambda r: r[0] == "ris")
    non = sweeps.by_seed(dist, 1, 3, lambda r: r[0] == "nonris")
    p_ris = max(sweeps.sign_test([ris[s][d] - non[s][d] for s in seeds]) for d in dgrid)
    p_nr = max(_pairwise_p(sweeps.by_seed(nr, 1, 3, lambda r, s=s: r[0] == s), ngrid, +1)
               for s in ("ris", "fairness_p"))
    p_lat = _pairwise_p(sweeps.by_seed(lat, 0, 2), sgrid, +1)
    report(capsys, 8, {
        "rate_vs_distance_p": (p_dist < 0.05, f"{p_dist:.1e}"),
        "nonris_below_ris_p": (p_ris < 0.05, f"{p_ris:.1e}"),
        "rate_vs_nr_p": (p_nr < 0.05, f"{p_nr:.1e}"),
        "latency_vs_size_p": (p_lat < 0.05, f"{p_lat:.1e}"),
        "runtime_s": (dt < 1800, f"{dt:.1f}"),
    })


def test_criterion_9_determinism(tmp_path, capsys):
    desk = str(CONFIGS / "desk.json")
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["simulate", "--config", desk, "--seed", "0", "--workers", "1", "--out", str(o)]) for o in outs]
    codes += [main(["sweep", "--kind", "distance", "--config", desk, "--seeds", "2", "--out", str(o)]) for o in outs]
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    report(capsys, 9, {
        "exit_codes": (codes == [0, 0, 0, 0], codes),
        "identical_csvs": (same and len(names) == 4, f"{len(names)} files"),
    })
