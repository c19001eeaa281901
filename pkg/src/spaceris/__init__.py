"""RIS-assisted sub-THz LEO satellite network simulator and resource optimizer."""

from .scenario import Scenario, parse_config
from .system import SystemModel

__all__ = ["Scenario", "SystemModel", "parse_config"]
__version__ = "0.1.0"
