"""Black-box secret-key-rate model."""

import math
from typing import Optional, Tuple

from ..config import settings
from ..models.physical import RateProfile
from ..models.topology import Link
from ..utils.exceptions import DomainError, LinkError
from .loss import effective_loss


def fit_profile(
    anchor_a: Tuple[float, float],
    anchor_b: Tuple[float, float],
    max_loss_db: float = 30.0
) -> RateProfile:
    """Exponential-in-dB profile passing exactly through two (loss_db, rate_bps) points."""
    (loss_a, rate_a), (loss_b, rate_b) = anchor_a, anchor_b
    if loss_a == loss_b or rate_a <= rate_b or loss_a > loss_b:
        raise DomainError("anchors must have increasing loss and decreasing rate")
    slope = math.log10(rate_a / rate_b) / (loss_b - loss_a)
    r0 = rate_a * 10 ** (slope * loss_a)
    return RateProfile(r0_bps=r0, slope_per_db=slope, max_loss_db=max_loss_db)


# CV-QKD field figures: ~70 kbps at 6 dB, ~20 kbps at 11 dB
DEFAULT_RATE_PROFILE = fit_profile((6.0, 70_000.0), (11.0, 20_000.0), settings.max_loss_db)

# Top-end direct link: ~1 Mbps at 40 km (8 dB), same decay
TOP_PERFORMANCE_PROFILE = RateProfile(
    r0_bps=1_000_000.0 * 10 ** (DEFAULT_RATE_PROFILE.slope_per_db * 8.0),
    slope_per_db=DEFAULT_RATE_PROFILE.slope_per_db,
    max_loss_db=settings.max_loss_db,
)

PROFILE_PRESETS = {
    "default": DEFAULT_RATE_PROFILE,
    "top_performance": TOP_PERFORMANCE_PROFILE,
}


def key_rate(loss_db: float, profile: Optional[RateProfile] = None) -> float:
    """Secret key rate (bits/s) at a given loss."""
    profile = profile or DEFAULT_RATE_PROFILE
    if loss_db < 0:
        raise DomainError(f"loss must be non-negative, got {loss_db}",
                          details={"loss_db": loss_db})
    if loss_db > profile.max_loss_db:
        return 0.0
    return profile.r0_bps * 10 ** (-profile.slope_per_db * loss_db)


def link_loss(link: Link, channel_penalty_db: Optional[float] = None) -> float:
    """Effective loss of a physical link."""
    if not link.is_physical or link.fiber is None:
        raise LinkError(f"Link '{link.link_id}' has no fiber",
                        error_code="WRONG_LINK_KIND", link_id=link.link_id)
    return effective_loss(link.fiber, link.n_classical, channel_penalty_db)


def link_key_rate(link: Link, channel_penalty_db: Optional[float] = None) -> float:
    """Raw (100% duty) key rate of a physical link."""
    return key_rate(link_loss(link, channel_penalty_db), link.rate_profile)
