"""Whale optimization for transmit-power allocation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .results import write_rows


@dataclass
class WoaHyper:
    pop_size: int = 30
    max_iters: int = 500
    spiral_b: float = 1.0
    penalty_mu: float = 1e14
    r_min_bps: float = 0.0
    a_max: float = 2.0

    def __post_init__(self):
        if self.pop_size < 1 or self.max_iters < 1 or self.penalty_mu <= 0:
            raise ValueError("invalid WOA hyper-parameters")


def coeffs(t: int, max_iters: int, rng: np.random.Generator, a_max: float = 2.0, dim: int = 1):
    """(a, A, C, l, p) for iteration ``t``; ``a`` falls linearly from ``a_max`` to 0.

    ``A`` and ``C`` are vectors with one independent draw per dimension.
    """
    a = a_max * (1.0 - t / max_iters)
    r1, r2 = rng.random(dim), rng.random(dim)
    A = 2.0 * a * r1 - a
    C = 2.0 * r2
    l = rng.uniform(-1.0, 1.0)
    p = rng.random()
    return a, A, C, l, p


def encircle(x, x_best, A, C):
    d = np.abs(C * x_best - x)
    return x_best - A * d


def explore(x, x_rand, A, C):
    return encircle(x, x_rand, A, C)


def spiral(x, x_best, b, l):
    d = np.abs(x_best - x)
    return d * math.exp(b * l) * math.cos(2.0 * math.pi * l) + x_best


def penalty_fitness(rates, r_min: float, mu: float) -> float:
    """Negative sum rate plus ``mu`` times the squared shortfall below ``r_min``."""
    rates = np.asarray(rates, dtype=float)
    if not np.all(np.isfinite(rates)):
        raise ValueError("non-finite rate in fitness evaluation")
    f = rates - r_min
    return float(-rates.sum() + mu * np.sum(np.where(f < 0, f * f, 0.0)))


@dataclass
class WoaResult:
    best: np.ndarray
    best_fitness: float
    trace: list[tuple[int, float, float, int]] = field(default_factory=list)


def optimize(fitness: Callable[[np.ndarray], float], dim: int, lower, upper, hyper: WoaHyper,
             rng: np.random.Generator, project: Callable[[np.ndarray], np.ndarray] | None = None,
             violations: Callable[[np.ndarray], int] | None = None,
             init: np.ndarray | None = None) -> WoaResult:
    """Minimize ``fitness`` over a box with optional feasibility projection.

    ``init`` rows seed the first whales (the rest are uniform in the box).
    The best-so-far whale is kept, so the recorded best fitness never rises.
    """
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (dim,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (dim,))
    proj = project if project is not None else (lambda x: np.clip(x, lower, upper))
    pop = lower + rng.random((hyper.pop_size, dim)) * (upper - lower)
    if init is not None:
        seed_rows = np.atleast_2d(np.asarray(init, dtype=float))[:hyper.pop_size]
        pop[:len(seed_rows)] = seed_rows
    pop = np.array([proj(x) for x in pop])
    fit = np.array([fitness(x) for x in pop])
    k = int(np.argmin(fit))
    best, best_fit = pop[k].copy(), float(fit[k])
    trace = []
    for t in range(hyper.max_iters):
        for i in range(hyper.pop_size):
            _, A, C, l, p = coeffs(t, hyper.max_iters, rng, hyper.a_max, dim)
            if p < 0.5:
                # search coordinates with |A| >= 1 around a random whale, shrink the rest
                j = int(rng.integers(hyper.pop_size))
                pop[i] = np.where(np.abs(A) >= 1.0, explore(pop[i], pop[j], A, C),
                                  encircle(pop[i], best, A, C))
            else:
                pop[i] = spiral(pop[i], best, hyper.spiral_b, l)
            pop[i] = proj(pop[i])
        fit = np.array([fitness(x) for x in pop])
        k = int(np.argmin(fit))
        if fit[k] < best_fit:
            best, best_fit = pop[k].copy(), float(fit[k])
        viol = violations(best) if violations is not None else 0
        trace.append((t, best_fit, float(np.mean(fit)), int(viol)))
    return WoaResult(best=best, best_fitness=best_fit, trace=trace)


# -- the power subproblem -------------------------------------------------------

@dataclass
class PowerProblem:
    """Sum-rate power allocation over GBS-satellite links.

    ``kappa[u, t]`` is the SNR per watt of RUE ``u`` in slot ``t``; a link's
    power is split equally between the RUEs of its cluster. ``bandwidth_hz``
    is a scalar or one value per RUE. The rate floor applies only where
    ``active`` is set (default: everywhere).
    """

    kappa: np.ndarray
    rue_link: np.ndarray
    link_gbs: np.ndarray
    bandwidth_hz: float | np.ndarray
    p_max_w: float
    r_min_bps: float = 0.0
    active: np.ndarray | None = None

    def __post_init__(self):
        self.kappa = np.atleast_2d(np.asarray(self.kappa, dtype=float))
        bw = np.asarray(self.bandwidth_hz, dtype=float)
        self._bw = bw[:, None] if bw.ndim == 1 else bw
        self.active = (np.ones(self.kappa.shape, dtype=bool) if self.active is None
                       else np.asarray(self.active, dtype=bool))
        self.rue_link = np.asarray(self.rue_link, dtype=int)
        self.link_gbs = np.asarray(self.link_gbs, dtype=int)
        self.n_per_link = np.bincount(self.rue_link, minlength=len(self.link_gbs)).astype(float)

    @property
    def dim(self) -> int:
        return len(self.link_gbs)

    def rue_power(self, p_links) -> np.ndarray:
        p = np.asarray(p_links, dtype=float)
        return p[self.rue_link] / self.n_per_link[self.rue_link]

    def rates(self, p_links) -> np.ndarray:
        gamma = self.kappa * self.rue_power(p_links)[:, None]
        return self._bw * np.log1p(gamma) / math.log(2.0)

    def project(self, p_links) -> np.ndarray:
        """Clip to [0, P_max], then scale each GBS's links down to a total of P_max."""
        p = np.clip(np.asarray(p_links, dtype=float), 0.0, self.p_max_w)
        for b in np.unique(self.link_gbs):
            sel = self.link_gbs == b
            total = p[sel].sum()
            if total > self.p_max_w:
                p[sel] *= self.p_max_w / total
        return p

    def uniform(self) -> np.ndarray:
        p = np.zeros(self.dim)
        for b in np.unique(self.link_gbs):
            sel = self.link_gbs == b
            p[sel] = self.p_max_w / sel.sum()
        return p

    def fitness(self, p_links, mu: float = 1e14) -> float:
        r = self.rates(p_links)
        # inactive entries carry zero rate and are exempt from the floor
        floor = np.where(self.active, self.r_min_bps, 0.0)
        shortfall = np.minimum(r - floor, 0.0)
        if not np.all(np.isfinite(r)):
            raise ValueError("non-finite rate in fitness evaluation")
        return float(-r.sum() + mu * np.sum(shortfall * shortfall))

    def objective(self, p_links) -> float:
        return float(self.rates(p_links).sum())

    def violations(self, p_links, tol: float = 1e-9) -> int:
        """Count of rate shortfalls plus power-budget excesses."""
        p = np.asarray(p_links, dtype=float)
        n = int(np.sum(self.active & (self.rates(p) < self.r_min_bps)))
        n += int(np.sum(p < -tol))
        for b in np.unique(self.link_gbs):
            if p[self.link_gbs == b].sum() > self.p_max_w * (1 + tol):
                n += 1
        return n

    def solve(self, hyper: WoaHyper, rng: np.random.Generator, init=None) -> WoaResult:
        return optimize(lambda x: self.fitness(x, hyper.penalty_mu), self.dim, 0.0, self.p_max_w, hyper, rng,
                        project=self.project, violations=self.violations, init=init)


def write_trace(path, trace, prov=None) -> None:
    write_rows(path, "woa_trace", trace, prov)
