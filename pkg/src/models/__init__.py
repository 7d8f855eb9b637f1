"""Pydantic models for the SDQKD network emulator."""

from .topology import (
    ApplicationRecord,
    Capability,
    FiberSpec,
    InterfaceRole,
    InterfaceStatus,
    Link,
    LinkKind,
    LinkStatus,
    NodeDescriptor,
    NodeStatus,
    QkdInterface,
    Technology,
    Topology,
    Violation,
)

from .physical import (
    BlockState,
    KeyBlock,
    RateProfile,
    SchedulerConfig,
    SlotAssignment,
    SlotKind,
    SpectrumMap,
)

from .keys import (
    AppUsage,
    DeliveredKey,
    KeyReservation,
    KeySession,
    QoS,
    RelayRecord,
    SessionState,
    StoreCounters,
)

from .control import (
    ControllerState,
    Directive,
    DirectiveAck,
    DirectiveKind,
    NodeStatusReport,
    Notification,
    NotificationKind,
    PathConstraints,
    PeerMessage,
)

from .validation import underlying_physical_links, validate_topology
from .documents import decode_document, encode_document, read_document, write_document

__all__ = [
    # Topology
    "ApplicationRecord",
    "Capability",
    "FiberSpec",
    "InterfaceRole",
    "InterfaceStatus",
    "Link",
    "LinkKind",
    "LinkStatus",
    "NodeDescriptor",
    "NodeStatus",
    "QkdInterface",
    "Technology",
    "Topology",
    "Violation",
    # Physical layer
    "BlockState",
    "KeyBlock",
    "RateProfile",
    "SchedulerConfig",
    "SlotAssignment",
    "SlotKind",
    "SpectrumMap",
    # Keys
    "AppUsage",
    "DeliveredKey",
    "KeyReservation",
    "KeySession",
    "QoS",
    "RelayRecord",
    "SessionState",
    "StoreCounters",
    # Control plane
    "ControllerState",
    "Directive",
    "DirectiveAck",
    "DirectiveKind",
    "NodeStatusReport",
    "Notification",
    "NotificationKind",
    "PathConstraints",
    "PeerMessage",
    # Validation and documents
    "underlying_physical_links",
    "validate_topology",
    "decode_document",
    "encode_document",
    "read_document",
    "write_document",
]
