"""Key management models: store counters, sessions, delivered keys and relay accounting."""

import base64
from enum import Enum
from typing import Dict, List, Optional
from pydantic import BaseModel, Field


class StoreCounters(BaseModel):
    """Bit accounting of one link at one endpoint."""
    generated_bits: int = 0
    available_bits: int = 0
    reserved_bits: int = 0
    consumed_bits: int = 0

    @property
    def conserved(self) -> bool:
        """generated = available + reserved + consumed."""
        return self.generated_bits == (
            self.available_bits + self.reserved_bits + self.consumed_bits)


class QoS(BaseModel):
    """Requested key size, minimum delivery rate and delivery mode of a session."""
    key_size_bits: int = Field(default=256, gt=0)
    min_rate_bps: float = Field(default=0.0, ge=0.0)
    hybrid: bool = Field(default=False, description="XOR every key with a classically agreed key")


class SessionState(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


class KeySession(BaseModel):
    """An application pairing consuming keys at two endpoints."""
    session_id: str
    initiator_app: str
    responder_app: str
    initiator_node: str
    responder_node: str
    serving_link: str
    qos: QoS = Field(default_factory=QoS)
    state: SessionState = SessionState.OPEN

    def role_of(self, node_id: str, app_id: str) -> Optional[str]:
        """'initiator', 'responder' or None for an app at a node."""
        if node_id == self.initiator_node and app_id == self.initiator_app:
            return "initiator"
        if node_id == self.responder_node and app_id == self.responder_app:
            return "responder"
        return None


class DeliveredKey(BaseModel):
    """A key handed to an application."""
    key_id: str
    bytes: bytes
    session_id: str
    size_bits: int

    @property
    def key_b64(self) -> str:
        return base64.b64encode(self.bytes).decode("ascii")


class KeyReservation(BaseModel):
    """Blocks backing one key id, sent from initiator to responder."""
    key_id: str
    link_id: str
    block_ids: List[int]
    size_bits: int


class RelayRecord(BaseModel):
    """Accounting of one trusted-relay delivery."""
    virtual_link_id: str
    key_id: str
    delivered_bits: int
    per_hop_consumed_bits: Dict[str, int] = Field(default_factory=dict)
    auth_overhead_bits_per_hop: int = 0
    discarded_bits_per_hop: int = 0
    at: float = 0.0


class AppUsage(BaseModel):
    """Key usage of one application at one node."""
    keys_delivered: int = 0
    bits_consumed: int = 0
