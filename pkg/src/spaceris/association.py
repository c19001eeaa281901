"""Balanced K-means association of RUEs to satellites."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import DEFAULT_CONSTANTS, GeoConstants
from .geometry import elevation_matrix, local_projection, subsatellite_point


class InfeasibleAssociation(ValueError):
    def __init__(self, rue_ids):
        self.rue_ids = list(rue_ids)
        super().__init__(f"RUEs without a covering satellite: {self.rue_ids}")


def hungarian_assign(cost) -> tuple[np.ndarray, float]:
    """Minimum-cost perfect assignment of rows to columns.

    Rectangular inputs are padded with a large sentinel cost; the returned
    permutation then covers only the real rows. Among equal-cost optima the
    lowest column index wins at every augmentation step.

    Returns
    -------
    perm : ndarray of int
        ``perm[i]`` is the column assigned to row ``i``.
    total : float
        Sum of the selected real costs.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    n_rows, n_cols = c.shape
    n = max(n_rows, n_cols)
    if n == 0:
        return np.zeros(0, dtype=int), 0.0
    if n_rows != n_cols:
        sentinel = (np.abs(c).max() + 1.0) * n * 10.0
        padded = np.full((n, n), sentinel)
        padded[:n_rows, :n_cols] = c
        c_work = padded
    else:
        c_work = c

    # potentials method, 1-based internally
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = c_work[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.zeros(n, dtype=int)
    for j in range(1, n + 1):
        if p[j]:
            perm[p[j] - 1] = j - 1
    perm = perm[:n_rows]
    real = perm < n_cols
    total = float(c[np.arange(n_rows)[real], perm[real]].sum())
    return perm, total


def cluster_sizes(num_points: int, num_clusters: int) -> np.ndarray:
    """Balanced sizes: the first ``U mod S`` clusters get one extra point."""
    base, extra = divmod(num_points, num_clusters)
    return np.array([base + 1 if i < extra else base for i in range(num_clusters)])


@dataclass
class ClusterState:
    centroids: np.ndarray
    slots_per_cluster: np.ndarray
    assignment: np.ndarray
    mse: float
    mse_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _balanced_assignment(points, centroids, sizes):
    # one column per pre-allocated cluster slot
    owner = np.repeat(np.arange(len(centroids)), sizes)
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    perm, total = hungarian_assign(d2[:, owner])
    return owner[perm], total / len(points)


def bkmc(rue_positions, sat_positions_initial, max_iters: int = 100,
         tol: float = 1e-9) -> ClusterState:
    """Balanced K-means with Hungarian selection.

    Parameters
    ----------
    rue_positions : (U, D) array
        Planar RUE coordinates in metres.
    sat_positions_initial : (S, D) array
        Initial centroids, one per satellite, in the same frame.
    max_iters : int
        Upper bound on assignment/update rounds.
    tol : float
        Stop once no centroid moves more than this (metres).

    The assignment cost is squared Euclidean distance, so the recorded MSE
    never increases from one iteration to the next.
    """
    x = np.asarray(rue_positions, dtype=float)
    c = np.asarray(sat_positions_initial, dtype=float).copy()
    if x.size == 0 or c.size == 0:
        raise ValueError("bkmc needs at least one RUE and one satellite")
    x = np.atleast_2d(x)
    c = np.atleast_2d(c)
    n_u, n_s = len(x), len(c)
    if n_u < n_s:
        raise ValueError(f"need U >= S, got U={n_u}, S={n_s}")
    sizes = cluster_sizes(n_u, n_s)
    trace = []
    labels = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        labels, _ = _balanced_assignment(x, c, sizes)
        new_c = np.array([x[labels == k].mean(axis=0) for k in range(n_s)])
        shift = float(np.max(np.linalg.norm(new_c - c, axis=1)))
        c = new_c
        trace.append(float(((x - c[labels]) ** 2).sum(axis=1).mean()))
        if shift <= tol:
            converged = True
            break
    return ClusterState(centroids=c, slots_per_cluster=sizes, assignment=labels,
                        mse=trace[-1], mse_trace=trace, iterations=it, converged=converged)


@dataclass
class AssociationMatrix:
    """``v[b, u, s] = 1`` when GBS ``b`` reaches RUE ``u`` through satellite ``s``."""

    v: np.ndarray
    serving_gbs: dict[int, int] = field(default_factory=dict)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.v.shape

    def satellite_of(self, rue: int) -> int:
        hits = np.argwhere(self.v[:, rue, :])
        return int(hits[0, 1]) if len(hits) else -1

    def gbs_of(self, rue: int) -> int:
        hits = np.argwhere(self.v[:, rue, :])
        return int(hits[0, 0]) if len(hits) else -1

    def served_rues(self) -> list[int]:
        return [u for u in range(self.v.shape[1]) if self.v[:, u, :].any()]

    def validate(self) -> list[str]:
        problems = []
        if not np.isin(self.v, (0, 1)).all():
            problems.append("entries must be binary")
        per_pair = self.v.sum(axis=0)
        for u, s in np.argwhere(per_pair > 0):
            if per_pair[u, s] != 1:
                problems.append(f"RUE {u} via satellite {s} served by {per_pair[u, s]} GBSs")
        for u in range(self.v.shape[1]):
            if self.v[:, u, :].sum() > 1:
                problems.append(f"RUE {u} associated with more than one satellite")
        return problems


def serving_gbs_map(sat_positions: np.ndarray, gbs_positions: np.ndarray, min_elev_rad: float) -> dict[int, int]:
    """Nearest visible GBS per satellite; nearest GBS overall if none is visible."""
    elev = elevation_matrix(gbs_positions, sat_positions)
    out = {}
    for s in range(len(sat_positions)):
        dist = np.linalg.norm(gbs_positions - sat_positions[s], axis=1)
        visible = elev[:, s] >= min_elev_rad
        cand = np.where(visible, dist, np.inf) if visible.any() else dist
        out[s] = int(np.argmin(cand))
    return out


def build_association(cluster: ClusterState, cluster_sats: Sequence[int], rue_positions: np.ndarray,
                      sat_positions: np.ndarray, gbs_positions: np.ndarray,
                      min_elev_rad: float) -> AssociationMatrix:
    """Turn a clustering into the binary association tensor.

    ``cluster_sats[k]`` is the satellite node id behind cluster ``k``.
    Raises :class:`InfeasibleAssociation` listing every RUE that its
    cluster's satellite does not cover.
    """
    n_u = len(rue_positions)
    gbs_map = serving_gbs_map(sat_positions, gbs_positions, min_elev_rad)
    elev = elevation_matrix(rue_positions, sat_positions)
    v = np.zeros((len(gbs_positions), n_u, len(sat_positions)), dtype=int)
    uncovered = []
    for u in range(n_u):
        s = int(cluster_sats[cluster.assignment[u]])
        if elev[u, s] < min_elev_rad:
            uncovered.append(u)
            continue
        v[gbs_map[s], u, s] = 1
    if uncovered:
        raise InfeasibleAssociation(uncovered)
    used = {int(cluster_sats[k]) for k in set(cluster.assignment.tolist())}
    return AssociationMatrix(v=v, serving_gbs={s: gbs_map[s] for s in sorted(used)})


def associate(rue_positions: np.ndarray, sat_positions: np.ndarray, gbs_positions: np.ndarray,
              min_elev_rad: float, max_iters: int = 100,
              consts: GeoConstants = DEFAULT_CONSTANTS) -> tuple[AssociationMatrix, ClusterState, list[int]]:
    """Full association step for one slot.

    Candidate satellites are those covering at least one RUE; when there
    are more candidates than RUEs the ones with the best mean elevation are
    kept. Ground coordinates are projected around the RUE centroid.
    """
    elev = elevation_matrix(rue_positions, sat_positions)
    visible = np.where((elev >= min_elev_rad).any(axis=0))[0]
    if len(visible) == 0:
        raise InfeasibleAssociation(range(len(rue_positions)))
    order = visible[np.argsort(-elev[:, visible].mean(axis=0), kind="stable")]
    chosen = sorted(int(s) for s in order[:len(rue_positions)])
    center = rue_positions.mean(axis=0)
    center = consts.earth_radius_m * center / np.linalg.norm(center)
    rue_xy = local_projection(rue_positions, center)
    sub = np.array([subsatellite_point(sat_positions[s], consts) for s in chosen])
    sat_xy = local_projection(sub, center)
    state = bkmc(rue_xy, sat_xy, max_iters=max_iters)
    assoc = build_association(state, chosen, rue_positions, sat_positions, gbs_positions, min_elev_rad)
    return assoc, state, chosen


def dump_clusters(path, state: ClusterState, cluster_sats: Sequence[int], rue_xy: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rue", "cluster", "satellite", "distance_m"])
        for u, k in enumerate(state.assignment):
            d = math.dist(rue_xy[u], state.centroids[k])
            w.writerow([u, int(k), int(cluster_sats[k]), f"{d:.6f}"])
