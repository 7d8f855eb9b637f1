"""Agent-side state: node view, link endpoints, relays in flight and the directive replay memo."""

from collections import OrderedDict
from typing import Dict, List, Optional, Set
from pydantic import BaseModel, Field

from ..config import settings
from ..models.control import Directive, DirectiveAck
from ..models.topology import InterfaceRole, Link, NodeDescriptor


class LinkEndpoint(BaseModel):
    """This node's end of a link."""
    link: Link
    iface_id: Optional[str] = None
    role: Optional[InterfaceRole] = None
    hops: Optional[List[str]] = Field(
        None, description="Physical link ids under a virtual link, in path order")


class AgentState(BaseModel):
    """Everything an agent owns about its node, apart from key material."""
    node: NodeDescriptor
    pending_directives: List[Directive] = Field(default_factory=list)
    link_endpoints: Dict[str, LinkEndpoint] = Field(default_factory=dict)
    applications: Dict[str, Optional[str]] = Field(
        default_factory=dict, description="Connected app id -> peer app hint")
    notification_seq: int = 0
    watermark_armed: Set[str] = Field(default_factory=set)
    relay_holds: Dict[str, Dict[str, List[int]]] = Field(
        default_factory=dict, description="Relay id -> hop link -> block ids reserved for its pads")


class RelayContext(BaseModel):
    """Source-side state of a relay between reservation and delivery."""
    relay_id: str
    virtual_link_id: str
    path: List[str]
    hops: List[str]
    length_bits: int
    n_blocks: int
    provision_blocks: int = Field(0, description="Non-zero: the key fills virtual-link store blocks")
    directive_id: Optional[str] = None
    key_id: Optional[str] = None
    key: Optional[bytes] = None


class DirectiveMemo:
    """Bounded LRU of directive_id -> ack, so replays re-ack without re-executing."""

    def __init__(self, capacity: Optional[int] = None):
        self.capacity = capacity or settings.directive_memo_size
        self._acks: "OrderedDict[str, DirectiveAck]" = OrderedDict()

    def get(self, directive_id: str) -> Optional[DirectiveAck]:
        ack = self._acks.get(directive_id)
        if ack is not None:
            self._acks.move_to_end(directive_id)
        return ack

    def remember(self, ack: DirectiveAck) -> None:
        self._acks[ack.directive_id] = ack
        self._acks.move_to_end(ack.directive_id)
        while len(self._acks) > self.capacity:
            self._acks.popitem(last=False)

    def __contains__(self, directive_id: str) -> bool:
        return directive_id in self._acks

    def __len__(self) -> int:
        return len(self._acks)
