import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spaceris.association import (
    AssociationMatrix, InfeasibleAssociation, bkmc, build_association, cluster_sizes, hungarian_assign,
)
from spaceris.geometry import ground_point
from spaceris.constants import DEFAULT_CONSTANTS

R_E = DEFAULT_CONSTANTS.earth_radius_m


def brute_force(cost):
    n = len(cost)
    return min(sum(cost[i][p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def test_hungarian_small_cases():
    perm, total = hungarian_assign([[1, 2], [2, 1]])
    assert list(perm) == [0, 1] and total == 2
    perm, total = hungarian_assign([[4, 1], [2, 3]])
    assert list(perm) == [1, 0] and total == 3


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_hungarian_matches_brute_force(n, seed):
    cost = np.random.default_rng(seed).uniform(-5, 10, size=(n, n))
    perm, total = hungarian_assign(cost)
    assert sorted(perm.tolist()) == list(range(n))
    assert total == pytest.approx(cost[np.arange(n), perm].sum(), abs=1e-9)
    assert total == pytest.approx(brute_force(cost), abs=1e-9)


def test_hungarian_rectangular_and_bad_input():
    perm, total = hungarian_assign([[1, 2, 3], [4, 5, 0]])
    assert list(perm) == [0, 2] and total == 1
    with pytest.raises(ValueError):
        hungarian_assign([[1, np.nan], [0, 1]])


def test_bkmc_two_groups():
    pts = np.array([(0, 0), (0, 1), (10, 0), (10, 1)], float)
    st_ = bkmc(pts, np.array([(1, 0), (9, 0)], float))
    groups = {frozenset(np.where(st_.assignment == k)[0].tolist()) for k in range(2)}
    assert groups == {frozenset({0, 1}), frozenset({2, 3})}
    # the result is the best balanced partition
    best = min(itertools.combinations(range(4), 2),
               key=lambda a: sum(((pts[list(g)] - pts[list(g)].mean(0)) ** 2).sum()
                                 for g in (a, tuple(set(range(4)) - set(a)))))
    assert frozenset(best) in groups


def test_bkmc_one_per_cluster_and_sizes():
    rng = np.random.default_rng(0)
    st_ = bkmc(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)))
    assert sorted(np.bincount(st_.assignment).tolist()) == [1, 1, 1, 1]
    st_ = bkmc(rng.normal(size=(5, 2)), rng.normal(size=(2, 2)))
    assert sorted(np.bincount(st_.assignment).tolist()) == [2, 3]
    assert cluster_sizes(5, 2).tolist() == [3, 2]


def test_bkmc_needs_enough_rues():
    with pytest.raises(ValueError):
        bkmc(np.zeros((1, 2)), np.zeros((2, 2)))


@settings(max_examples=60)
@given(st.integers(1, 5), st.integers(0, 12), st.integers(0, 2**32 - 1))
def test_bkmc_balance_and_monotone_mse(s, extra, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1e5, 1e5, size=(s + extra, 2))
    st_ = bkmc(pts, rng.uniform(-1e5, 1e5, size=(s, 2)))
    sizes = np.bincount(st_.assignment, minlength=s)
    assert sizes.max() - sizes.min() <= 1
    assert all(b <= a * (1 + 1e-12) + 1e-9 for a, b in zip(st_.mse_trace, st_.mse_trace[1:]))


def _scene():
    # two satellites above the equator, four RUEs under them, one GBS between
    h = 500e3
    sats = np.array([ground_point(0, lon) * (R_E + h) / R_E for lon in (0.0, 0.02)])
    rues = np.array([ground_point(0, lon) for lon in (-0.001, 0.001, 0.019, 0.021)])
    gbs = np.array([ground_point(0, 0.01)])
    return rues, sats, gbs


def test_build_association_counts_and_validates():
    rues, sats, gbs = _scene()
    xy = np.column_stack([np.zeros(4), [-1, 1, 19, 21]])
    state = bkmc(xy, np.array([[0, 0], [0, 20]], float))
    v = build_association(state, [0, 1], rues, sats, gbs, math.radians(12))
    assert v.v.sum() == 4
    assert v.validate() == []
    assert [v.satellite_of(u) for u in range(4)] == [0, 0, 1, 1]


def test_uncovered_rue_is_infeasible():
    rues, sats, gbs = _scene()
    rues = rues.copy()
    rues[0] = ground_point(0.0, math.pi)  # far side of the planet
    state = bkmc(np.column_stack([np.zeros(4), [-1, 1, 19, 21]]), np.array([[0, 0], [0, 20]], float))
    with pytest.raises(InfeasibleAssociation) as err:
        build_association(state, [0, 1], rues, sats, gbs, math.radians(12))
    assert 0 in err.value.rue_ids


def test_validate_flags_double_service():
    v = np.zeros((2, 1, 1), int)
    v[:, 0, 0] = 1
    assert AssociationMatrix(v).validate()
