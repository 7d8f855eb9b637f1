"""Control-plane documents exchanged between the controller and the agents."""

from enum import Enum
from typing import Any, Dict, List, Optional
from pydantic import BaseModel, Field

from .keys import AppUsage, RelayRecord, StoreCounters
from .topology import ApplicationRecord, InterfaceStatus, Topology


class DirectiveKind(str, Enum):
    CREATE_LINK_ENDPOINT = "create_link_endpoint"
    ACTIVATE_LINK = "activate_link"
    TEARDOWN = "teardown"
    SET_PROFILE = "set_profile"
    OPEN_RELAY = "open_relay"


class Directive(BaseModel):
    """A configuration update requested by the controller."""
    directive_id: str
    target_node: str
    kind: DirectiveKind
    payload: Dict[str, Any] = Field(default_factory=dict)


class DirectiveAck(BaseModel):
    """Terminal response to a directive: ack or error."""
    directive_id: str
    node_id: str
    ok: bool = True
    error_code: Optional[str] = None
    message: Optional[str] = None
    result: Dict[str, Any] = Field(default_factory=dict)


class NotificationKind(str, Enum):
    APP_CONNECTED = "app_connected"
    APP_DISCONNECTED = "app_disconnected"
    LINK_STATUS = "link_status"
    KEY_LOW_WATERMARK = "key_low_watermark"


NOTIFICATION_TOPICS: Dict[NotificationKind, str] = {
    NotificationKind.APP_CONNECTED: "qkd.app.connected",
    NotificationKind.APP_DISCONNECTED: "qkd.app.disconnected",
    NotificationKind.LINK_STATUS: "qkd.link.status",
    NotificationKind.KEY_LOW_WATERMARK: "qkd.link.key_low",
}


class Notification(BaseModel):
    """A change pushed from an agent to the controller."""
    topic: str
    emitter: str
    kind: NotificationKind
    payload: Dict[str, Any] = Field(default_factory=dict)
    seq: int


class PeerMessage(BaseModel):
    """Agent-to-agent message on the key data path."""
    kind: str = Field(..., description="session_open, reserve, session_close or a relay_* step")
    sender: str
    session_id: str = Field(..., description="Key session id, or relay id for relay_* kinds")
    payload: Dict[str, Any] = Field(default_factory=dict)
    route: List[str] = Field(default_factory=list, description="Classical nodes traversed, sender first")


class InterfaceState(BaseModel):
    iface_id: str
    status: InterfaceStatus
    attached_link: Optional[str] = None


class NodeStatusReport(BaseModel):
    """Snapshot an agent gathers from its node."""
    node_id: str
    interfaces: List[InterfaceState] = Field(default_factory=list)
    links: Dict[str, StoreCounters] = Field(default_factory=dict)
    allocatable: Dict[str, int] = Field(
        default_factory=dict, description="Available bits above the allocation mark, per link")
    applications: Dict[str, AppUsage] = Field(default_factory=dict)
    connected_apps: List[str] = Field(default_factory=list)

    def available_bits(self, link_id: str) -> int:
        counters = self.links.get(link_id)
        return counters.available_bits if counters else 0

    def allocatable_bits(self, link_id: str) -> int:
        return self.allocatable.get(link_id, 0)


class PathConstraints(BaseModel):
    """Per-hop requirements for relay path computation."""
    min_available_bits: int = Field(default=0, ge=0)


class ControllerState(BaseModel):
    """Read-only snapshot of the controller's central database."""
    topology: Topology = Field(default_factory=Topology)
    applications: Dict[str, ApplicationRecord] = Field(default_factory=dict)
    expected_rates_bps: Dict[str, float] = Field(default_factory=dict)
    observed_rates_bps: Dict[str, float] = Field(default_factory=dict)
    observed_available_bits: Dict[str, int] = Field(default_factory=dict)
    app_usage: Dict[str, AppUsage] = Field(default_factory=dict)
    relay_records: List[RelayRecord] = Field(default_factory=list)
