import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spaceris.channel import (
    CascadeChannel, CloudConfig, DegenerateLinkError, LinkBudget, LossConfig, PlasmaConfig, RainConfig,
    RisPanel, absorption_loss_db, coherent_bound, coherent_phases, effective_gain, los_hop, nrp,
    panel_offsets, phase_matrix, plasma_metrics, rate, sample_rician, snr, spreading_loss_db, total_loss,
    ula_offsets,
)

C = 299_792_458.0
CLEAR = dict(rain=RainConfig(rate_mm_h=0.0), cloud=CloudConfig(chi_c_g_m3=0.0), plasma=PlasmaConfig(n_e_per_m3=0.0))


def unit_budget(total_linear=1.0):
    return LinkBudget(0, 0, 0, 0, 0, 0, 1.0, total_linear, 0.0, (1.0, 0.0, 1.0))


def random_cascade(rng, sizes, k=2):
    hops, prev = [], k
    for n in sizes:
        hops.append(rng.normal(size=(n, prev)) + 1j * rng.normal(size=(n, prev)))
        prev = n
    g = rng.normal(size=prev) + 1j * rng.normal(size=prev)
    return CascadeChannel(hops, g)


def los_cascade(n, k=1, wavelength=3e-3, dist=500e3):
    """Normalised single-hop LoS cascade: coherent gain 1 regardless of n."""
    tx = np.zeros(3)
    ris = np.array([0.0, 0.0, dist])
    rue = np.array([2e5, 0.0, 0.0])
    h = los_hop(ris, panel_offsets(n, (1.5e-3, 1.5e-3), [0, 0, -1]), tx, ula_offsets(k, wavelength / 2, [0, 0, 1]),
                wavelength) / math.sqrt(n * k)
    g = los_hop(rue, np.zeros((1, 3)), ris, panel_offsets(n, (1.5e-3, 1.5e-3), [0, 0, -1]), wavelength)[0]
    return CascadeChannel([h], g / math.sqrt(n))


# -- loss terms ---------------------------------------------------------------

def test_spreading_golden():
    expected = 20 * math.log10(4 * math.pi * 1e6 * 1e11 / C)
    assert spreading_loss_db(0.1e12, 1e6) == pytest.approx(expected, abs=1e-12)
    assert abs(spreading_loss_db(0.1e12, 1e6) - 192.45) < 0.01


def test_spreading_zero_db_distance():
    assert spreading_loss_db(1e11, C / (4 * math.pi * 1e11)) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(1.0, 1e8))
def test_spreading_doubling(d):
    assert spreading_loss_db(1e11, 2 * d) - spreading_loss_db(1e11, d) == pytest.approx(20 * math.log10(2))


def test_absorption():
    assert absorption_loss_db(0.0, 1e6) == 0.0
    assert absorption_loss_db(1e-5, 1e5) == pytest.approx(10 * math.log10(math.e), abs=1e-12)


@given(st.floats(0, 1e-3), st.floats(0, 1e6), st.floats(0, 1e6))
def test_absorption_additive(k, d1, d2):
    assert absorption_loss_db(k, d1 + d2) == pytest.approx(absorption_loss_db(k, d1) + absorption_loss_db(k, d2),
                                                           rel=1e-12, abs=1e-12)


def test_weather():
    from spaceris.channel import weather_loss_db
    rain, _ = weather_loss_db(LossConfig(rain=RainConfig(0.8, 0.7, 10.0, 2.0)))
    assert rain == pytest.approx(0.8 * 10**0.7 * 2, abs=1e-12)
    assert abs(rain - 8.02) < 0.01
    assert weather_loss_db(LossConfig(rain=RainConfig(rate_mm_h=0.0)))[0] == 0.0
    assert weather_loss_db(LossConfig(cloud=CloudConfig(chi_c_g_m3=0.0)))[1] == 0.0


def test_plasma_frequency():
    m = plasma_metrics(LossConfig())
    e, me, e0 = 1.6021e-19, 9.109e-31, 8.854e-12
    assert m.f_plasma_hz == pytest.approx(math.sqrt(1e12 * e * e / (me * e0)) / (2 * math.pi), rel=1e-12)
    assert abs(m.f_plasma_hz - 8.98e6) < 0.01e6
    assert (m.f_plasma_hz / 1e11) ** 2 == pytest.approx(8.06e-9, rel=0.01)
    off = plasma_metrics(LossConfig(plasma=PlasmaConfig(n_e_per_m3=0.0)))
    assert off.f_plasma_hz == 0.0 and off.atten_per_m == 0.0


def test_nrp():
    assert nrp(0.0) == 1.0
    assert nrp(math.radians(60)) == pytest.approx(0.125)
    assert nrp(math.radians(91)) == 0.0


def test_negative_coefficient_rejected():
    with pytest.raises(ValueError):
        LossConfig(kappa_abs_per_m=-1.0)


# -- total loss ------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 4, 8, 16])
def test_array_doubling_lowers_loss(n):
    cfg = LossConfig()
    a = total_loss(cfg, 5e5, 1e6, 5e5, num_elements=n)
    b = total_loss(cfg, 5e5, 1e6, 5e5, num_elements=2 * n)
    assert a.total_db - b.total_db == pytest.approx(20 * math.log10(2), abs=1e-9)


def test_single_element_unit_geometry():
    cfg = LossConfig(**CLEAR)
    b = total_loss(cfg, 1.0, None, 1.0, element_size_m=(1.0, 1.0), spread_distance_m=1.0, absorption_path_m=1.0)
    expected = (4 * math.pi * cfg.fc_hz / C) ** 2 * math.exp(cfg.kappa_abs_per_m)
    assert b.total_linear == pytest.approx(expected, rel=1e-12)


@given(st.floats(1e4, 2e6), st.floats(1e4, 2e6), st.floats(1e4, 2e6), st.integers(1, 64))
def test_decomposition_identity(d1, d2, d3, n):
    b = total_loss(LossConfig(), d1, d2, d3, gbs_gain=1e5, rue_gain=1e4, num_elements=n)
    assert abs(sum(v for _, v in b.components()) - b.total_db) < 1e-9


def test_budget_golden_regression():
    b = total_loss(LossConfig(), 500e3, 1000e3, 500e3, gbs_gain=1e5, rue_gain=1e4, num_elements=16,
                   element_size_m=(1.5e-3, 1.5e-3))
    assert b.total_db == pytest.approx(585.33737013373, abs=1e-9)


def test_zero_distance_is_degenerate():
    with pytest.raises(DegenerateLinkError):
        total_loss(LossConfig(), 0.0, None, 5e5)


# -- fading and RIS ------------------------------------------------------------------

def test_rician_limits():
    rng = np.random.default_rng(0)
    los = np.exp(1j * np.linspace(0, 3, 6)).reshape(2, 3)
    np.testing.assert_allclose(sample_rician((2, 3), 1e12, los, rng), los, atol=1e-5)
    draws = sample_rician((100_000,), 0.0, 0.0, np.random.default_rng(1))
    assert abs(np.mean(np.abs(draws) ** 2) - 1.0) < 0.02
    a = sample_rician((4, 4), 3.0, los[0, 0], np.random.default_rng(7))
    b = sample_rician((4, 4), 3.0, los[0, 0], np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_phase_matrix():
    assert np.array_equal(phase_matrix(RisPanel(4)), np.eye(4))
    p = phase_matrix(RisPanel(5, phases_rad=np.random.default_rng(0).uniform(0, 6, 5)))
    np.testing.assert_allclose(p @ p.conj().T, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(phase_matrix(RisPanel(3, phases_rad=np.full(3, math.pi))), -np.eye(3), atol=1e-12)


def test_unit_snr():
    cas = CascadeChannel([np.ones((1, 1), complex)], np.ones(1, complex), beamformer=np.ones(1, complex))
    n0, lt = 4e-21, 1e20
    assert snr(cas, [RisPanel(1)], unit_budget(lt), n0 * lt, noise_w=n0) == pytest.approx(1.0, rel=1e-12)
    assert snr(cas, [RisPanel(1)], unit_budget(lt), 1.0, assoc=0) == 0.0


def test_coherent_phases_hit_bound_and_beat_grid():
    cas = los_cascade(2)
    bound = coherent_bound(cas)
    aligned = effective_gain(cas, [RisPanel(2, phases_rad=coherent_phases(cas.hops, cas.terminal)[0])])
    assert aligned == pytest.approx(bound, rel=1e-9)
    levels = np.arange(8) * 2 * math.pi / 8
    grid = max(effective_gain(cas, [RisPanel(2, phases_rad=np.array(p))])
               for p in itertools.product(levels, repeat=2))
    assert grid <= bound * (1 + 1e-12)
    assert aligned >= grid * (1 - 1e-12)


def test_random_phases_average_below_bound():
    cas = los_cascade(8)
    rng = np.random.default_rng(0)
    gains = [effective_gain(cas, [RisPanel(8, phases_rad=rng.uniform(0, 2 * math.pi, 8))]) for _ in range(100)]
    assert np.mean(gains) < coherent_bound(cas)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_gain_never_exceeds_bound(seed, sizes):
    rng = np.random.default_rng(seed)
    cas = random_cascade(rng, sizes)
    panels = [RisPanel(n, phases_rad=rng.uniform(0, 2 * math.pi, n)) for n in sizes]
    assert effective_gain(cas, panels) <= coherent_bound(cas) * (1 + 1e-9)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_coherent_phases_exact_on_rank_one_chains(seed, sizes):
    rng = np.random.default_rng(seed)
    hops, prev = [], 2
    for n in sizes:
        u = np.exp(1j * rng.uniform(0, 6.3, n))
        v = np.exp(1j * rng.uniform(0, 6.3, prev))
        hops.append(np.outer(u, v.conj()))
        prev = n
    cas = CascadeChannel(hops, np.exp(1j * rng.uniform(0, 6.3, prev)))
    phases = coherent_phases(cas.hops, cas.terminal)
    gain = effective_gain(cas, [RisPanel(n, phases_rad=p) for n, p in zip(sizes, phases)])
    assert gain == pytest.approx(coherent_bound(cas), rel=1e-9)


def test_coherent_snr_array_steps():
    cfg = LossConfig()
    out = []
    for n in (1, 2, 4, 8):
        cas = los_cascade(n)
        budget = total_loss(cfg, 5e5, None, 5e5, num_elements=n)
        panel = RisPanel(n, phases_rad=coherent_phases(cas.hops, cas.terminal)[0])
        out.append(10 * math.log10(snr(cas, [panel], budget, 1.0, noise_w=1e-30)))
    for a, b in zip(out, out[1:]):
        assert abs((b - a) - 6.02) < 0.01


def test_rate():
    assert rate(1.0, 1.0) == pytest.approx(1.0)
    assert rate(1.0, 3.0) == pytest.approx(2.0)
    assert rate(1.0, 0.0) == 0.0
    assert rate(1e9, 1e-20) == pytest.approx(1e9 * 1e-20 / math.log(2), rel=1e-9)
    with pytest.raises(ValueError):
        rate(1.0, -1.0)
