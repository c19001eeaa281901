"""Physical constants and default simulation values."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GeoConstants:
    """Earth, orbit and plasma constants shared by the geometry and channel code.

    Defaults follow the simulation table used throughout the package
    (Earth radius 6,378,100 m, c = 299,792,458 m/s, 10 s slots). The
    gravitational constant and Earth mass are CODATA/IERS values.
    """

    earth_radius_m: float = 6_378_100.0
    grav_const: float = 6.674_30e-11
    earth_mass_kg: float = 5.972_2e24
    light_speed_m_s: float = 299_792_458.0
    slot_seconds: float = 10.0
    electron_charge_c: float = 1.6021e-19
    electron_mass_kg: float = 9.109e-31
    vacuum_permittivity: float = 8.854e-12

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    @property
    def mu(self) -> float:
        """Standard gravitational parameter G*M in m^3/s^2."""
        return self.grav_const * self.earth_mass_kg


DEFAULT_CONSTANTS = GeoConstants()

# Table-style defaults used when a scenario leaves them out.
ALTITUDE_M = 500_000.0
SATS_PER_PLANE = 22
MIN_ELEVATION_DEG = 12.0
CARRIER_HZ = 0.1e12
EPISODE_SLOTS = 513
LEARNING_RATE = 3e-4
DISCOUNT = 0.95
ACTOR_HIDDEN = (128, 128)
CRITIC_HIDDEN = (16, 16)
