"""Physical-layer models: rate profiles, scheduling, spectrum and key blocks."""

from enum import Enum
from typing import Dict, List, Optional
from pydantic import BaseModel, ConfigDict, Field


class RateProfile(BaseModel):
    """Secret-key-rate curve as an exponential in dB of loss.

    rate(loss) = r0_bps * 10 ** (-slope_per_db * loss) up to max_loss_db, 0 beyond.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    r0_bps: float = Field(..., gt=0.0, description="Secret key bits/s at 0 dB")
    slope_per_db: float = Field(..., gt=0.0, description="Decades of rate lost per dB")
    max_loss_db: float = Field(default=30.0, gt=0.0, description="Cutoff loss (dB)")


class SchedulerConfig(BaseModel):
    """Time sharing of one transmitter between several receivers."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    calibration_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    slot_seconds: float = Field(default=0.1, gt=0.0)


class BlockState(str, Enum):
    AVAILABLE = "available"
    RESERVED = "reserved"
    CONSUMED = "consumed"


class KeyBlock(BaseModel):
    """A fixed-size unit of synchronized key material on one link."""
    block_id: int = Field(..., ge=0)
    link_id: str
    bytes: bytes
    created_at: float = 0.0
    state: BlockState = BlockState.AVAILABLE

    @property
    def size_bits(self) -> int:
        return len(self.bytes) * 8


class SlotKind(str, Enum):
    CLASSICAL = "classical"
    QUANTUM = "quantum"
    PILOT = "pilot"
    EMPTY = "empty"


class SlotAssignment(BaseModel):
    """What occupies one grid slot."""
    model_config = ConfigDict(frozen=True)

    kind: SlotKind = SlotKind.EMPTY
    channel_no: Optional[int] = Field(
        None, description="1-based classical channel number (classical slots only)")


class SpectrumMap(BaseModel):
    """Channel plan of one fiber: classical channels, the quantum channel and its pilot tone."""
    model_config = ConfigDict(frozen=True)

    grid_slots: int = Field(default=40, gt=0)
    assignments: Dict[int, SlotAssignment] = Field(default_factory=dict)

    def slots_of(self, kind: SlotKind) -> List[int]:
        """Slot indices holding a given kind, ascending."""
        return sorted(slot for slot, a in self.assignments.items() if a.kind == kind)

    def slot_of_channel(self, channel_no: int) -> Optional[int]:
        for slot, a in self.assignments.items():
            if a.kind == SlotKind.CLASSICAL and a.channel_no == channel_no:
                return slot
        return None
