"""API dependencies for dependency injection."""

import asyncio
from functools import lru_cache

from ..config import settings
from ..harness import QKDNetwork, load_scenario_file, madrid_scenario
from ..utils.logging_config import log_step


@lru_cache()
def get_network() -> QKDNetwork:
    """Emulated network served by the API (singleton)."""
    if settings.scenario_path:
        scenario = load_scenario_file(settings.scenario_path)
    else:
        scenario = madrid_scenario()
    log_step("start", message="networked mode", scenario=scenario.name, seed=scenario.seed)
    return QKDNetwork.from_scenario(scenario)


@lru_cache()
def get_network_lock() -> asyncio.Lock:
    """Serializes requests into the single simulation queue."""
    return asyncio.Lock()
