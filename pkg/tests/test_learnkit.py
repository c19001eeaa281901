import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spaceris import learnkit as lk
from spaceris.constants import ACTOR_HIDDEN, CRITIC_HIDDEN

# every layer stack the agents build: routing actor, phase actor, critics
USED_SHAPES = [
    (5, *ACTOR_HIDDEN, 5),
    (3, *ACTOR_HIDDEN, 8),
    (8, *CRITIC_HIDDEN, 1),
    (13, *CRITIC_HIDDEN, 1),
]


# recorded from the first run of the seeded network below
GOLDEN_OUT = np.array([0.11214556022753346, 0.22824600251370664])


def test_zero_network_outputs_zero():
    net = lk.Mlp([3, 4, 2])
    net.params = [np.zeros_like(p) for p in net.params]
    np.testing.assert_array_equal(net.forward(np.ones(3)), np.zeros(2))


def test_identity_layer_echoes_input():
    net = lk.Mlp([3, 3])
    net.params = [np.eye(3), np.zeros(3)]
    x = np.array([0.5, -2.0, 7.0])
    np.testing.assert_array_equal(net.forward(x), x)


def test_forward_golden():
    net = lk.Mlp([3, 4, 2], np.random.default_rng(42))
    out = net.forward(np.array([0.1, -0.2, 0.3]))
    np.testing.assert_allclose(out, GOLDEN_OUT, rtol=0, atol=1e-12)


def test_linear_gradient_is_input():
    net = lk.Mlp([3, 1])
    x = np.array([1.0, 2.0, 3.0])
    _, acts = net.forward_cache(x)
    g = net.backward(acts, np.ones(1))
    np.testing.assert_array_equal(g[0][:, 0], x)
    np.testing.assert_array_equal(g[1], [1.0])


def test_zero_upstream_gives_zero_gradients():
    net = lk.Mlp([4, 6, 3], np.random.default_rng(1))
    _, acts = net.forward_cache(np.ones(4))
    assert all(np.all(g == 0) for g in net.backward(acts, np.zeros(3)))


@pytest.mark.parametrize("dims", USED_SHAPES)
def test_finite_difference_on_used_shapes(dims):
    rng = np.random.default_rng(7)
    net = lk.Mlp(dims, rng)
    x = rng.normal(size=(4, dims[0]))
    up = rng.normal(size=(4, dims[-1]))
    assert lk.gradient_check(net, x, up, samples=20, rng=rng) < 1e-4


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 2**32 - 1))
def test_finite_difference_property(dims, seed):
    rng = np.random.default_rng(seed)
    net = lk.Mlp(dims, rng)
    x = rng.normal(size=(3, dims[0]))
    up = rng.normal(size=(3, dims[-1]))
    assert lk.gradient_check(net, x, up, samples=10, rng=rng) < 1e-4


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, -2.0])]
    lk.adam_step(lk.AdamState(), p, [np.zeros(2)])
    np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_adam_first_step_is_lr_against_gradient():
    p = [np.array([1.0, 1.0])]
    lk.adam_step(lk.AdamState(lr=1e-3), p, [np.array([5.0, -0.1])])
    np.testing.assert_allclose(p[0], [1.0 - 1e-3, 1.0 + 1e-3], atol=1e-9)


def test_adam_quadratic_step_budget():
    # each step moves at most ~lr, so 2000 steps cannot cross from 1 to 0 at lr 3e-4
    x = [np.array([1.0])]
    state = lk.AdamState(lr=3e-4)
    for _ in range(2000):
        lk.adam_step(state, x, [2 * x[0]])
    assert 1.0 - x[0][0] <= 2000 * 3e-4 * (1 + 1e-6)
    for _ in range(6000):
        lk.adam_step(state, x, [2 * x[0]])
    assert abs(x[0][0]) < 1e-3


def test_adam_refuses_nonfinite():
    with pytest.raises(FloatingPointError):
        lk.adam_step(lk.AdamState(), [np.zeros(1)], [np.array([np.nan])])


def test_categorical_head():
    head = lk.CategoricalHead()
    rng = np.random.default_rng(0)
    picks = [int(lk.sample_and_logprob(head, np.array([1000.0, 0.0]), rng)[0]) for _ in range(1000)]
    assert picks.count(0) >= 999
    logits = rng.normal(size=5)
    assert np.exp(head.log_probs(logits)).sum() == pytest.approx(1.0, abs=1e-9)


@given(st.lists(st.floats(-30, 30), min_size=5, max_size=5), st.lists(st.booleans(), min_size=5, max_size=5))
def test_masked_sampling_respects_mask(logits, mask):
    if not any(mask):
        mask[0] = True
    head = lk.CategoricalHead()
    a, lp = head.sample(np.array(logits), np.random.default_rng(0), np.array(mask))
    assert mask[int(a)] and np.isfinite(lp)


def test_gaussian_head_tiny_sigma_returns_mean():
    head = lk.GaussianHead(dim=3, log_std=np.full(3, -40.0))
    mean = np.array([0.1, 2.0, -1.0])
    raw, _ = lk.sample_and_logprob(head, mean, np.random.default_rng(0))
    np.testing.assert_allclose(raw, mean, atol=1e-12)


def test_gaussian_wrap_bound():
    head = lk.GaussianHead(dim=1, low=0.0, high=2 * math.pi, wrap=True)
    assert head.bound(np.array([7.0]))[0] == pytest.approx(7.0 - 2 * math.pi)


def test_checkpoint_round_trip(tmp_path):
    net = lk.Mlp([3, 5, 2], np.random.default_rng(3))
    lk.save_checkpoint(tmp_path / "a.ckpt", net, np.array([0.25, -1.0]))
    back, extras = lk.load_checkpoint(tmp_path / "a.ckpt")
    assert back.layer_dims == net.layer_dims
    for a, b in zip(back.params, net.params):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(extras, [0.25, -1.0])


def test_checkpoint_bad_magic(tmp_path):
    (tmp_path / "x").write_bytes(b"nope" + bytes(20))
    with pytest.raises(ValueError):
        lk.load_checkpoint(tmp_path / "x")
