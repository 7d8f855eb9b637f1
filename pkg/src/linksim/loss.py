"""Fiber loss budgets."""

from ..config import settings
from ..models.topology import FiberSpec


def compute_loss(fiber: FiberSpec, attenuation_db_per_km: float = None) -> float:
    """Total loss of a fiber span in dB: attenuation times length plus every passive element."""
    if attenuation_db_per_km is None:
        attenuation_db_per_km = settings.attenuation_db_per_km
    return attenuation_db_per_km * fiber.length_km + sum(fiber.component_losses_db)


def effective_loss(fiber: FiberSpec, n_classical: int = 0, channel_penalty_db: float = None) -> float:
    """Loss seen by the quantum channel, including the co-propagation penalty per classical channel."""
    if channel_penalty_db is None:
        channel_penalty_db = settings.channel_penalty_db
    return compute_loss(fiber) + channel_penalty_db * n_classical
