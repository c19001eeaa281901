"""Sub-THz link losses, RIS cascades, SNR and rate."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import CARRIER_HZ, DEFAULT_CONSTANTS, GeoConstants

DB_PER_NEPER_POWER = 10.0 / math.log(10.0)  # 10*log10(e)


class DegenerateLinkError(ValueError):
    """A zero distance in the cascaded array factor."""


@dataclass
class RainConfig:
    phi_r: float = 1.0
    mu_r: float = 0.7
    rate_mm_h: float = 5.0
    path_km: float = 3.0


@dataclass
class CloudConfig:
    xi_c: float = 4.0
    chi_c_g_m3: float = 0.1
    path_km: float = 1.0


@dataclass
class PlasmaConfig:
    n_e_per_m3: float = 1e12
    f_col_hz: float = 1e4
    b_avg_tesla: float = 45e-6
    wave_number: float | None = None


@dataclass
class LossConfig:
    """Propagation-loss coefficients. Absorption and collision frequency are plain inputs."""

    fc_hz: float = CARRIER_HZ
    kappa_abs_per_m: float = 1e-5
    rain: RainConfig = field(default_factory=RainConfig)
    cloud: CloudConfig = field(default_factory=CloudConfig)
    plasma: PlasmaConfig = field(default_factory=PlasmaConfig)
    temperature_K: float = 1000.0
    pressure_Pa: float = 101_325.0
    atmosphere_height_m: float = 10_000.0

    def __post_init__(self):
        coeffs = [self.kappa_abs_per_m, self.rain.phi_r, self.rain.mu_r, self.rain.rate_mm_h,
                  self.rain.path_km, self.cloud.xi_c, self.cloud.chi_c_g_m3, self.cloud.path_km,
                  self.plasma.n_e_per_m3, self.plasma.f_col_hz, self.plasma.b_avg_tesla,
                  self.temperature_K, self.pressure_Pa, self.atmosphere_height_m]
        if any(c < 0 for c in coeffs):
            raise ValueError("loss coefficients must be non-negative")
        if not self.fc_hz > 0:
            raise ValueError("carrier frequency must be positive")
        if not 0.1e12 <= self.fc_hz <= 3e12:
            warnings.warn(f"carrier {self.fc_hz:g} Hz is outside the 0.1-3 THz band", stacklevel=2)

    def wavelength(self, consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
        return consts.light_speed_m_s / self.fc_hz


# -- individual loss terms -------------------------------------------------

def spreading_loss_db(f_hz: float, d_m: float, consts: GeoConstants = DEFAULT_CONSTANTS) -> float:
    if f_hz <= 0 or d_m <= 0:
        raise ValueError("frequency and distance must be positive")
    return 20.0 * math.log10(4.0 * math.pi * d_m * f_hz / consts.light_speed_m_s)


def absorption_loss_db(kappa_per_m: float, d_m: float) -> float:
    if kappa_per_m < 0:
        raise ValueError("absorption coefficient must be non-negative")
    return DB_PER_NEPER_POWER * kappa_per_m * d_m


def weather_loss_db(cfg: LossConfig) -> tuple[float, float]:
    """Rain and cloud attenuation in dB."""
    r = cfg.rain
    rain = r.phi_r * r.rate_mm_h**r.mu_r * r.path_km
    c = cfg.cloud
    cloud = c.xi_c * c.chi_c_g_m3 * c.path_km
    return rain, cloud


@dataclass(frozen=True)
class PlasmaMetrics:
    f_plasma_hz: float
    faraday_rad_per_m: float
    atten_per_m: float


def plasma_metrics(cfg: LossConfig, consts: GeoConstants = DEFAULT_CONSTANTS) -> PlasmaMetrics:
    """Plasma frequency, Faraday rotation rate and the per-metre attenuation factor.

    The wave number defaults to ``2*pi*f_c/c``, which makes the attenuation
    factor a loss per metre of ionospheric path.
    """
    p = cfg.plasma
    f_c = cfg.fc_hz
    f_p = consts.electron_charge_c / (2.0 * math.pi) * math.sqrt(
        p.n_e_per_m3 / (consts.vacuum_permittivity * consts.electron_mass_kg))
    faraday = 2.36e4 * p.b_avg_tesla * f_c**-2 * p.n_e_per_m3
    k = p.wave_number if p.wave_number is not None else 2.0 * math.pi * f_c / consts.light_speed_m_s
    ratio = f_p / f_c
    atten = 0.5 * k * ratio**2 * (p.f_col_hz / f_c) * (1.0 + 0.5 * ratio)
    return PlasmaMetrics(f_p, faraday, atten)


def nrp(elev_rad: float, azim_rad: float = 0.0) -> float:
    """Normalised radiation pattern: cos^3 in the front hemisphere, zero behind."""
    if not 0.0 <= elev_rad <= math.pi:
        raise ValueError("elevation must lie in [0, pi]")
    if elev_rad > math.pi / 2:
        return 0.0
    return math.cos(elev_rad) ** 3


# -- total loss --------------------------------------------------------------

@dataclass(frozen=True)
class LinkBudget:
    spread_db: float
    abs_db: float
    rain_db: float
    cloud_db: float
    plasma_db: float
    ris_array_db: float
    nrp_product: float
    total_linear: float
    faraday_rad: float
    distances: tuple[float, float, float]

    @property
    def total_db(self) -> float:
        return 10.0 * math.log10(self.total_linear)

    def components(self) -> list[tuple[str, float]]:
        return [("spread", self.spread_db), ("absorption", self.abs_db), ("rain", self.rain_db),
                ("cloud", self.cloud_db), ("plasma", self.plasma_db),
                ("ris_array", self.ris_array_db)]


def _as_hops(d_ss) -> list[float]:
    if d_ss is None:
        return []
    if np.ndim(d_ss) == 0:
        return [float(d_ss)]
    return [float(x) for x in d_ss]


def total_loss(cfg: LossConfig, d_bs: float, d_ss, d_su: float, *,
               gbs_gain: float = 1.0, rue_gain: float = 1.0, num_elements: int = 1,
               element_size_m: tuple[float, float] | None = None, amplitude: float = 1.0,
               nrp_factors=None, spread_distance_m: float | None = None,
               absorption_path_m: float | None = None, plasma_path_m: float | None = None,
               consts: GeoConstants = DEFAULT_CONSTANTS) -> LinkBudget:
    """Cascaded sub-THz loss of a GBS -> RIS(s) -> RUE path.

    ``d_ss`` is the inter-satellite distance, a list of per-hop distances,
    or ``None`` for a path through a single satellite. ``nrp_factors``
    holds the five pattern factors (GBS-RIS, GBS, RIS-RIS, RUE, RIS-RUE),
    either one row for all elements or one row per element.

    The spreading, absorption and plasma terms use the whole path length
    unless a specific length is given.
    """
    hops = _as_hops(d_ss)
    dists = [d_bs, *hops, d_su]
    if any(d <= 0 for d in dists):
        raise DegenerateLinkError("degenerate-link: zero distance in the cascaded array factor")
    if num_elements < 1:
        raise ValueError("a cascade needs at least one RIS element")
    if element_size_m is None:
        half = cfg.wavelength(consts) / 2.0
        element_size_m = (half, half)
    d_path = spread_distance_m if spread_distance_m is not None else sum(dists)

    spread = spreading_loss_db(cfg.fc_hz, d_path, consts)
    absorb = absorption_loss_db(cfg.kappa_abs_per_m,
                                absorption_path_m if absorption_path_m is not None else d_path)
    rain, cloud = weather_loss_db(cfg)
    pm = plasma_metrics(cfg, consts)
    iono = plasma_path_m if plasma_path_m is not None else d_path
    plasma = DB_PER_NEPER_POWER * pm.atten_per_m * iono

    if nrp_factors is None:
        f_tot = np.ones(num_elements)
    else:
        f = np.atleast_2d(np.asarray(nrp_factors, dtype=float))
        f_tot = np.prod(f, axis=1)
        if f_tot.size == 1:
            f_tot = np.full(num_elements, f_tot[0])
        elif f_tot.size != num_elements:
            raise ValueError("nrp_factors rows must match num_elements")
    array_sum = float(np.sum(np.sqrt(f_tot))) / math.prod(dists)
    gain = gbs_gain * rue_gain * element_size_m[0] * element_size_m[1] * amplitude**2 * array_sum**2
    if gain <= 0:
        ris_array_db = math.inf
    else:
        ris_array_db = -10.0 * math.log10(gain)
    total_db = spread + absorb + rain + cloud + plasma + ris_array_db
    return LinkBudget(
        spread_db=spread, abs_db=absorb, rain_db=rain, cloud_db=cloud, plasma_db=plasma,
        ris_array_db=ris_array_db, nrp_product=float(f_tot[0]),
        total_linear=10.0 ** (total_db / 10.0), faraday_rad=pm.faraday_rad_per_m * iono,
        distances=(d_bs, float(sum(hops)), d_su),
    )


# -- RIS panels and channels -----------------------------------------------

@dataclass
class RisPanel:
    num_elements: int
    amplitude: float = 1.0
    element_size_m: tuple[float, float] = (1.5e-3, 1.5e-3)
    phases_rad: np.ndarray | None = None

    def __post_init__(self):
        if self.phases_rad is None:
            self.phases_rad = np.zeros(self.num_elements)
        self.phases_rad = np.mod(np.asarray(self.phases_rad, dtype=float), 2.0 * math.pi)
        if self.phases_rad.shape != (self.num_elements,):
            raise ValueError("one phase per element required")


def phase_matrix(panel: RisPanel) -> np.ndarray:
    return np.diag(panel.amplitude * np.exp(1j * panel.phases_rad))


def sample_rician(shape, k_factor: float, los_matrix, rng: np.random.Generator) -> np.ndarray:
    """LoS/NLoS mixture with unit average power per entry."""
    if k_factor < 0:
        raise ValueError("Rician factor must be non-negative")
    los = np.broadcast_to(np.asarray(los_matrix, dtype=complex), shape)
    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    if math.isinf(k_factor):
        return np.array(los)
    return math.sqrt(k_factor / (k_factor + 1.0)) * los + math.sqrt(1.0 / (k_factor + 1.0)) * nlos


def array_response(offsets: np.ndarray, direction: np.ndarray, wavelength: float) -> np.ndarray:
    """Unit-modulus planar-wave response of elements at ``offsets`` for unit ``direction``."""
    return np.exp(1j * 2.0 * math.pi / wavelength * (np.atleast_2d(offsets) @ direction))


def los_hop(rx_pos, rx_offsets, tx_pos, tx_offsets, wavelength: float) -> np.ndarray:
    """Rank-one far-field LoS matrix (rx elements x tx elements) with phase 2*pi*d/lambda."""
    delta = np.asarray(rx_pos, float) - np.asarray(tx_pos, float)
    d = float(np.linalg.norm(delta))
    u = delta / d
    a_rx = array_response(rx_offsets, -u, wavelength)
    a_tx = array_response(tx_offsets, -u, wavelength)
    # phase of d/lambda taken modulo one cycle before scaling keeps precision
    cycles = math.fmod(d / wavelength, 1.0)
    return np.exp(-1j * 2.0 * math.pi * cycles) * np.outer(a_rx, a_tx.conj())


def tangent_frame(normal) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    e1 = np.cross([0.0, 0.0, 1.0], n)
    if np.linalg.norm(e1) < 1e-12:
        e1 = np.array([1.0, 0.0, 0.0])
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def panel_offsets(num_elements: int, element_size_m: tuple[float, float], normal) -> np.ndarray:
    """Element centres of a near-square planar grid lying perpendicular to ``normal``."""
    cols = int(math.ceil(math.sqrt(num_elements)))
    idx = np.arange(num_elements)
    ix, iy = idx % cols, idx // cols
    e1, e2 = tangent_frame(normal)
    return (ix * element_size_m[0])[:, None] * e1 + (iy * element_size_m[1])[:, None] * e2


def ula_offsets(num_antennas: int, spacing: float, normal) -> np.ndarray:
    e1, _ = tangent_frame(normal)
    return (np.arange(num_antennas) * spacing)[:, None] * e1


@dataclass
class CascadeChannel:
    """Channel of one GBS -> RIS_1 -> ... -> RIS_R -> RUE path.

    ``hops[0]`` is N_1 x K, ``hops[r]`` is N_{r+1} x N_r, ``terminal`` has
    N_R entries. ``beamformer`` is the K-vector for this RUE; ``None``
    means matched to the effective channel.
    """

    hops: list[np.ndarray]
    terminal: np.ndarray
    rician_K_H: float = 10.0
    rician_K_g: float = 10.0
    beamformer: np.ndarray | None = None
    noise_psd: float = 10 ** ((-174.0 + 10.0 - 30.0) / 10.0)

    def __post_init__(self):
        for r in range(1, len(self.hops)):
            if self.hops[r].shape[1] != self.hops[r - 1].shape[0]:
                raise ValueError(f"hop {r} does not compose with hop {r - 1}")
        if self.hops and self.terminal.shape[0] != self.hops[-1].shape[0]:
            raise ValueError("terminal vector does not match the last RIS")

    @property
    def num_antennas(self) -> int:
        return self.hops[0].shape[1]


def sample_cascade(los_hops: Sequence[np.ndarray], los_terminal: np.ndarray, k_h: float, k_g: float,
                   rng: np.random.Generator, noise_psd: float | None = None) -> CascadeChannel:
    hops = [sample_rician(h.shape, k_h, h, rng) for h in los_hops]
    g = sample_rician(los_terminal.shape, k_g, los_terminal, rng)
    kw = {} if noise_psd is None else {"noise_psd": noise_psd}
    return CascadeChannel(hops=hops, terminal=g, rician_K_H=k_h, rician_K_g=k_g, **kw)


def effective_channel(cascade: CascadeChannel, panels: Sequence[RisPanel]) -> np.ndarray:
    """Row vector ``g^T Phi_R H_R ... Phi_1 H_1`` over the GBS antennas."""
    if len(panels) != len(cascade.hops):
        raise ValueError("one panel per hop required")
    v = cascade.terminal.astype(complex)
    for hop, panel in zip(reversed(cascade.hops), reversed(panels)):
        v = (v * panel.amplitude * np.exp(1j * panel.phases_rad)) @ hop
    return v


def matched_beamformer(c: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(c)
    if norm == 0:
        return np.full(c.shape, 1.0 / math.sqrt(c.size), dtype=complex)
    return c.conj() / norm


def effective_gain(cascade: CascadeChannel, panels: Sequence[RisPanel]) -> float:
    c = effective_channel(cascade, panels)
    w = cascade.beamformer if cascade.beamformer is not None else matched_beamformer(c)
    return float(abs(c @ w) ** 2)


def coherent_bound(cascade: CascadeChannel, amplitude: float = 1.0) -> float:
    """Triangle-inequality bound on ``effective_gain`` over all phase choices."""
    if cascade.beamformer is None:
        v = np.linalg.norm(cascade.hops[0], axis=1)
    else:
        v = np.abs(cascade.hops[0] @ cascade.beamformer)
    for hop in cascade.hops[1:]:
        v = np.abs(hop) @ (amplitude * v)
    return float((np.abs(cascade.terminal) @ (amplitude * v)) ** 2)


def coherent_phases(hops: Sequence[np.ndarray], terminal: np.ndarray) -> list[np.ndarray]:
    """Phases that co-phase a chain of rank-one hops.

    Each hop is reduced to its dominant singular pair ``u v^H``; element
    ``n`` of RIS ``r`` gets ``arg(v_{r+1,n}) - arg(u_{r,n})`` with the
    terminal playing the role of ``conj(v_{R+1})``. Exact when every hop is
    rank one.
    """
    pairs = []
    for h in hops:
        u, _, vh = np.linalg.svd(h, full_matrices=False)
        pairs.append((u[:, 0], vh[0].conj()))
    phases = []
    for r, (u_r, _) in enumerate(pairs):
        nxt = pairs[r + 1][1] if r + 1 < len(pairs) else terminal.conj()
        phases.append(np.mod(np.angle(nxt) - np.angle(u_r), 2.0 * math.pi))
    return phases


def snr(cascade: CascadeChannel, panels: Sequence[RisPanel], budget: LinkBudget, power_w: float,
        assoc: int = 1, noise_w: float | None = None) -> float:
    """Instantaneous SNR ``p |v g^T prod(Phi H) w|^2 / (noise * L_tot)``.

    ``noise_w`` defaults to the cascade's noise density; callers pass the
    in-band noise power ``N_o * B_u``.
    """
    if assoc == 0:
        return 0.0
    noise = cascade.noise_psd if noise_w is None else noise_w
    return power_w * effective_gain(cascade, panels) / (noise * budget.total_linear)


def rate(bandwidth_hz, gamma):
    """Shannon rate ``B log2(1 + gamma)``; exact for very small ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SNR must be non-negative")
    out = bandwidth_hz * np.log1p(gamma) / math.log(2.0)
    return float(out) if out.ndim == 0 else out
