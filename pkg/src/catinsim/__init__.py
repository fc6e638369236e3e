"""Agent-based catastrophe insurance and reinsurance market simulator."""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig, load_config
from .engine import World, run_replication
from .ensemble import run_ensemble
from .perils import EventProfile, build_event_profile

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "World",
    "run_replication",
    "run_ensemble",
    "EventProfile",
    "build_event_profile",
    "__version__",
]
