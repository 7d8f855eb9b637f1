"""API models for the networked emulator: northbound requests and node-local key delivery."""

from typing import List, Optional, Dict, Any
from pydantic import BaseModel, Field
from datetime import datetime

from .control import PathConstraints
from .keys import DeliveredKey, QoS
from .physical import RateProfile
from .topology import FiberSpec


class PhysicalLinkRequest(BaseModel):
    """Request model for a new quantum link between a transmitter and a receiver."""
    node_a: str
    iface_a: str
    node_b: str
    iface_b: str
    fiber: FiberSpec
    n_classical: int = Field(default=0, ge=0)
    rate_profile: Optional[RateProfile] = None
    pilot_after_channel: Optional[int] = None
    link_id: Optional[str] = None

    class Config:
        json_schema_extra = {
            "example": {
                "node_a": "almagro",
                "iface_a": "tx-norte",
                "node_b": "norte",
                "iface_b": "rx-almagro",
                "fiber": {"length_km": 3.9, "component_losses_db": [5.22]},
                "n_classical": 17,
                "pilot_after_channel": 11
            }
        }


class VirtualLinkRequest(BaseModel):
    """Request model for a trusted-relay link; the path is computed when omitted."""
    node_a: str
    node_b: str
    path: Optional[List[str]] = None
    constraints: PathConstraints = Field(default_factory=PathConstraints)
    link_id: Optional[str] = None


class RelayRequest(BaseModel):
    length_bits: int = Field(..., gt=0)
    source: Optional[str] = None


class RateProfileRequest(BaseModel):
    rate_profile: RateProfile


class AdvanceRequest(BaseModel):
    seconds: float = Field(..., ge=0.0, description="Simulated seconds to run")


class ConnectAppRequest(BaseModel):
    app_id: str
    peer_app: Optional[str] = None


class OpenSessionRequest(BaseModel):
    """Opened by the initiator application at the node in the URL."""
    app_id: str
    peer_app: str
    peer_node: str
    qos: QoS = Field(default_factory=QoS)


class GetKeyRequest(BaseModel):
    session_id: str
    app_id: str
    count: int = Field(default=1, ge=0)
    size_bits: int = Field(default=256, gt=0)


class GetKeyWithIdsRequest(BaseModel):
    session_id: str
    app_id: str
    key_ids: List[str]


class KeyItem(BaseModel):
    key_id: str
    key_b64: str


class KeyContainer(BaseModel):
    """Keys as handed to an application; bytes travel base64-encoded."""
    session_id: str
    keys: List[KeyItem] = Field(default_factory=list)

    @classmethod
    def from_keys(cls, session_id: str, keys: List[DeliveredKey]) -> "KeyContainer":
        return cls(session_id=session_id,
                   keys=[KeyItem(key_id=k.key_id, key_b64=k.key_b64) for k in keys])


class SessionResponse(BaseModel):
    session_id: str
    serving_link: str
    initiator_app: str
    initiator_node: str
    responder_app: str
    responder_node: str


class CloseSessionResponse(BaseModel):
    session_id: str
    released_bits: int


class SimulationStatus(BaseModel):
    """Clock and size of the emulated network."""
    now: float
    nodes: int
    links: int
    active_links: int
    pending_events: int


class HealthResponse(BaseModel):
    """Health check response."""
    status: str = "healthy"
    timestamp: datetime = Field(default_factory=datetime.utcnow)
    version: str
    uptime_seconds: float
    environment: str
    simulated_time_s: float = 0.0


class ErrorResponse(BaseModel):
    """Error response model."""
    error: bool = True
    message: str
    error_code: Optional[str] = None
    details: Optional[Dict[str, Any]] = None
    timestamp: datetime = Field(default_factory=datetime.utcnow)

    class Config:
        json_schema_extra = {
            "example": {
                "error": True,
                "message": "relay key depletion on hop 1 ('almagro-concepcion' at 'almagro')",
                "error_code": "RELAY_KEY_DEPLETION",
                "details": {
                    "hop_link_id": "almagro-concepcion",
                    "hop_index": 1,
                    "available_bits": 0
                },
                "timestamp": "2024-01-01T12:00:00Z"
            }
        }
