"""Black-box physical layer: loss budgets, key rates, transmitter sharing and key-block generation."""

from .loss import compute_loss, effective_loss
from .rate import (
    DEFAULT_RATE_PROFILE,
    TOP_PERFORMANCE_PROFILE,
    PROFILE_PRESETS,
    fit_profile,
    key_rate,
    link_key_rate,
    link_loss,
)
from .scheduler import schedule_transmitter, slot_owner, transmitter_groups
from .generator import KeyBlockGenerator, generate_key_blocks

__all__ = [
    "compute_loss",
    "effective_loss",
    "DEFAULT_RATE_PROFILE",
    "TOP_PERFORMANCE_PROFILE",
    "PROFILE_PRESETS",
    "fit_profile",
    "key_rate",
    "link_key_rate",
    "link_loss",
    "schedule_transmitter",
    "slot_owner",
    "transmitter_groups",
    "KeyBlockGenerator",
    "generate_key_blocks",
]
