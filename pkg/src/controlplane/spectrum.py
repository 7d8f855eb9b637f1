"""Channel plans for fibers carrying a quantum channel next to classical traffic."""

import math
from typing import Dict, Optional

from ..config import settings
from ..models.physical import SlotAssignment, SlotKind, SpectrumMap
from ..utils.exceptions import DomainError


def assign_spectrum(
    n_classical: int,
    grid_slots: Optional[int] = None,
    pilot_after_channel: Optional[int] = None
) -> SpectrumMap:
    """Lay out classical channels, the pilot tone and the quantum channel on a slot grid.

    Classical channels 1..k take slots 0..k-1, the pilot takes slot k and the
    quantum channel slot k+1; channels k+1..n follow. k defaults to ceil(n/2),
    so the pilot sits between channels k and k+1. Slots left over stay empty.
    """
    grid_slots = grid_slots or settings.grid_slots
    if n_classical < 0:
        raise DomainError(f"classical channel count must be >= 0, got {n_classical}",
                          details={"n_classical": n_classical})
    if n_classical + 2 > grid_slots:
        raise DomainError(
            f"grid overflow: {n_classical} classical channels + quantum + pilot "
            f"do not fit in {grid_slots} slots",
            error_code="GRID_OVERFLOW",
            details={"n_classical": n_classical, "grid_slots": grid_slots})

    split = math.ceil(n_classical / 2) if pilot_after_channel is None else pilot_after_channel
    if not 0 <= split <= n_classical:
        raise DomainError(
            f"pilot cannot follow channel {split} of {n_classical}",
            error_code="INVALID_PILOT_POSITION",
            details={"pilot_after_channel": split, "n_classical": n_classical})

    assignments: Dict[int, SlotAssignment] = {}
    slot = 0
    for channel in range(1, split + 1):
        assignments[slot] = SlotAssignment(kind=SlotKind.CLASSICAL, channel_no=channel)
        slot += 1
    assignments[slot] = SlotAssignment(kind=SlotKind.PILOT)
    assignments[slot + 1] = SlotAssignment(kind=SlotKind.QUANTUM)
    slot += 2
    for channel in range(split + 1, n_classical + 1):
        assignments[slot] = SlotAssignment(kind=SlotKind.CLASSICAL, channel_no=channel)
        slot += 1
    return SpectrumMap(grid_slots=grid_slots, assignments=assignments)


def spectrum_collisions(spectrum: SpectrumMap) -> Dict[str, int]:
    """Counts that must all be zero on a well-formed map."""
    quantum = len(spectrum.slots_of(SlotKind.QUANTUM))
    pilot = len(spectrum.slots_of(SlotKind.PILOT))
    channels = [a.channel_no for a in spectrum.assignments.values() if a.kind == SlotKind.CLASSICAL]
    return {
        "out_of_grid": sum(1 for s in spectrum.assignments if not 0 <= s < spectrum.grid_slots),
        "extra_quantum": max(quantum - 1, 0),
        "extra_pilot": max(pilot - 1, 0),
        "duplicate_channels": len(channels) - len(set(channels)),
    }
