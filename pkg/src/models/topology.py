"""Topology models: SDQKD nodes, QKD interfaces, links and applications."""

from enum import Enum
from typing import Dict, List, Optional, Set, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator

from .physical import RateProfile, SpectrumMap


class NodeStatus(str, Enum):
    """Administrative status of a node."""
    ACTIVE = "active"
    INACTIVE = "inactive"


class Capability(str, Enum):
    """Capability flags a node advertises to the controller."""
    SUPPORTS_RELAY = "supports-relay"
    SUPPORTS_HYBRID = "supports-hybrid"
    SUPPORTS_TIME_SHARING = "supports-time-sharing"


class InterfaceRole(str, Enum):
    TRANSMITTER = "transmitter"
    RECEIVER = "receiver"


class Technology(str, Enum):
    """QKD technology, carried as metadata only."""
    CV = "CV"
    DV = "DV"


class InterfaceStatus(str, Enum):
    IDLE = "idle"
    GENERATING = "generating"
    CALIBRATING = "calibrating"


class LinkKind(str, Enum):
    PHYSICAL = "physical"
    VIRTUAL = "virtual"


class LinkStatus(str, Enum):
    PLANNED = "planned"
    ACTIVE = "active"
    DOWN = "down"


class FiberSpec(BaseModel):
    """Fiber span plus the passive elements along it."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    length_km: float = Field(..., ge=0.0, description="Fiber length in km")
    component_losses_db: List[float] = Field(
        default_factory=list, description="One loss entry (dB) per passive element")

    @field_validator("component_losses_db")
    @classmethod
    def validate_losses(cls, v):
        """Every passive element contributes a non-negative loss."""
        if any(loss < 0 for loss in v):
            raise ValueError("component losses must be non-negative")
        return v


class QkdInterface(BaseModel):
    """One QKD system aggregated under an SDQKD node."""
    model_config = ConfigDict(frozen=True)

    iface_id: str
    role: InterfaceRole
    technology: Technology = Technology.CV
    attached_link: Optional[str] = None
    status: InterfaceStatus = InterfaceStatus.IDLE
    device_id: Optional[str] = Field(
        None, description="Interfaces sharing a device_id share one physical transmitter")


class NodeDescriptor(BaseModel):
    """An SDQKD node: identity, location, interfaces and capabilities."""
    model_config = ConfigDict(frozen=True)

    node_id: str
    location: str = ""
    interfaces: List[QkdInterface] = Field(default_factory=list)
    capabilities: Set[Capability] = Field(default_factory=set)
    status: NodeStatus = NodeStatus.ACTIVE

    @field_serializer("capabilities")
    def _sorted_capabilities(self, capabilities: Set[Capability]) -> List[str]:
        return sorted(c.value for c in capabilities)

    def get_interface(self, iface_id: str) -> Optional[QkdInterface]:
        """Get interface by id."""
        for iface in self.interfaces:
            if iface.iface_id == iface_id:
                return iface
        return None

    def with_interface(self, iface: QkdInterface) -> "NodeDescriptor":
        """Copy of this node with one interface replaced."""
        interfaces = [iface if i.iface_id == iface.iface_id else i for i in self.interfaces]
        return self.model_copy(update={"interfaces": interfaces})


class Link(BaseModel):
    """A key association between two nodes, physical or relayed."""
    model_config = ConfigDict(frozen=True)

    link_id: str
    kind: LinkKind
    endpoints: Tuple[str, str]
    interfaces: Optional[Tuple[str, str]] = Field(
        None, description="Interface ids on endpoints[0] and endpoints[1] (physical only)")
    fiber: Optional[FiberSpec] = None
    spectrum: Optional[SpectrumMap] = None
    rate_profile: Optional[RateProfile] = None
    n_classical: int = Field(default=0, ge=0)
    path: Optional[List[str]] = None
    status: LinkStatus = LinkStatus.PLANNED

    @property
    def is_physical(self) -> bool:
        return self.kind == LinkKind.PHYSICAL

    @property
    def is_active(self) -> bool:
        return self.status == LinkStatus.ACTIVE

    def connects(self, node_a: str, node_b: str) -> bool:
        """True when the link joins the two nodes, in either order."""
        return set(self.endpoints) == {node_a, node_b} and node_a != node_b

    def peer_of(self, node_id: str) -> str:
        a, b = self.endpoints
        return b if node_id == a else a


class ApplicationRecord(BaseModel):
    """A key-consuming application registered at a node."""
    app_id: str
    host_node: str
    peer_app: Optional[str] = None
    sessions: List[str] = Field(default_factory=list)
    registered_at: float = 0.0


class Topology(BaseModel):
    """Nodes and links known to the controller. Mutated only by the controller."""
    nodes: Dict[str, NodeDescriptor] = Field(default_factory=dict)
    links: Dict[str, Link] = Field(default_factory=dict)

    def physical_links(self) -> List[Link]:
        return [link for link in self.links.values() if link.is_physical]

    def virtual_links(self) -> List[Link]:
        return [link for link in self.links.values() if not link.is_physical]

    def links_between(self, node_a: str, node_b: str) -> List[Link]:
        """All links joining two nodes, ordered by link_id."""
        return sorted(
            (link for link in self.links.values() if link.connects(node_a, node_b)),
            key=lambda link: link.link_id)


class Violation(BaseModel):
    """One topology invariant violation."""
    code: str
    message: str
    subject: Optional[str] = None
