"""Ordered record of what happened in a run: generation, control traffic, relays and key deliveries."""

import hashlib
import json
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Union

from pydantic import BaseModel, Field

from ..models.control import Directive, DirectiveAck, Notification, PeerMessage

# Relay steps whose payload is worth keeping
_RELAY_FIELDS = {
    "relay_frame": ("virtual_link_id", "key_id", "pad_bits"),
    "relay_delivered": ("virtual_link_id", "key_id", "length_bits", "provisioned_bits"),
}


class LoggedEvent(BaseModel):
    seq: int
    at: float
    kind: str
    data: Dict[str, Any] = Field(default_factory=dict)


class EventLog:
    """Append-only event log stamped with simulated time."""

    def __init__(self, clock: Callable[[], float]):
        self.clock = clock
        self.events: List[LoggedEvent] = []

    def record(self, kind: str, **data: Any) -> LoggedEvent:
        event = LoggedEvent(seq=len(self.events) + 1, at=self.clock(), kind=kind, data=data)
        self.events.append(event)
        return event

    def observe(self, address: str, message: Any) -> None:
        """Bus tap: keep directives, acks, notifications and peer messages."""
        if isinstance(message, Directive):
            self.record("directive", id=message.directive_id, directive=message.kind.value,
                        target=message.target_node)
        elif isinstance(message, DirectiveAck):
            self.record("ack", id=message.directive_id, node=message.node_id, ok=message.ok,
                        error_code=message.error_code)
        elif isinstance(message, Notification):
            self.record("notification", emitter=message.emitter, notification=message.kind.value,
                        seq=message.seq, subscriber=address, payload=message.payload)
        elif isinstance(message, PeerMessage):
            data = {"peer": message.kind, "sender": message.sender,
                    "to": address.split("/", 1)[-1], "session": message.session_id,
                    "route": list(message.route)}
            for field in _RELAY_FIELDS.get(message.kind, ()):
                data[field] = message.payload.get(field)
            if message.kind == "relay_frame":
                data["hop_link"] = message.payload["frame"]["hop_link_id"]
            self.record("peer", **data)

    def of_kind(self, kind: str) -> List[LoggedEvent]:
        return [e for e in self.events if e.kind == kind]

    def lines(self) -> Iterator[str]:
        for event in self.events:
            yield json.dumps(event.model_dump(mode="json"), sort_keys=True)

    def digest(self) -> str:
        """SHA-256 over the JSON lines of the log, in order."""
        digest = hashlib.sha256()
        for line in self.lines():
            digest.update(line.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()

    def export(self, path: Union[str, Path]) -> Path:
        """Write the log as JSON lines."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(line + "\n" for line in self.lines()), encoding="utf-8")
        return path

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[LoggedEvent]:
        return iter(self.events)
