"""Per-node SDN agent: executes directives, runs the node's LKMS and talks to the controller."""

from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from .memory import AgentState, DirectiveMemo, LinkEndpoint, RelayContext
from ..config import settings
from ..controlplane.bus import CONTROLLER_ADDRESS, MessageBus, NotificationBus, agent_address
from ..controlplane.classical import ClassicalNetwork
from ..lkms import LocalKMS
from ..models.control import (
    NOTIFICATION_TOPICS, Directive, DirectiveAck, DirectiveKind, InterfaceState,
    NodeStatusReport, Notification, NotificationKind, PeerMessage)
from ..models.keys import (
    DeliveredKey, KeyReservation, KeySession, RelayRecord, SessionState, StoreCounters)
from ..models.physical import BlockState, KeyBlock, RateProfile
from ..models.topology import (
    Capability, InterfaceStatus, Link, LinkKind, LinkStatus, NodeDescriptor)
from ..relay import (
    RelayFrame, check_hop_pad, classical_key, draw_relay_key, hybrid_combine, open_hop,
    orient_path, pad_blocks_needed, relay_key_id, relay_record, seal_hop, split_into_blocks)
from ..utils.exceptions import (
    ApplicationError, DirectiveError, KeyDeliveryError, LinkError, QKDNetworkError,
    RelayDepletionError, RelayError)
from ..utils.logging_config import log_debug, log_error, log_relay, log_step

ON_DEMAND = "on_demand"
PRE_PROVISIONED = "pre_provisioned"

PeerHandler = Callable[[PeerMessage], None]


def relay_failure(payload: Dict[str, Any]) -> QKDNetworkError:
    """Rebuild the error carried by a relay_abort message."""
    details = dict(payload.get("details") or {})
    if payload.get("error_code") == "RELAY_KEY_DEPLETION":
        return RelayDepletionError(payload["message"], hop_link_id=details["hop_link_id"],
                                   hop_index=details["hop_index"],
                                   available_bits=details["available_bits"])
    return RelayError(payload["message"], error_code=payload.get("error_code") or "RELAY_ERROR",
                      details=details)


class SDNAgent:
    """One SDQKD node: its interfaces, its LKMS and its application endpoint."""

    def __init__(
        self,
        descriptor: NodeDescriptor,
        bus: MessageBus,
        notifications: NotificationBus,
        rng: Optional[np.random.Generator] = None,
        block_size_bits: Optional[int] = None,
        low_watermark_bits: Optional[int] = None,
        memo_size: Optional[int] = None,
        relay_mode: str = ON_DEMAND,
        auth_overhead_bits_per_hop: Optional[int] = None,
        clock: Optional[Callable[[], float]] = None,
        classical: Optional[ClassicalNetwork] = None,
        classical_seed: Optional[int] = None
    ):
        self.state = AgentState(node=descriptor)
        self.memo = DirectiveMemo(memo_size)
        self.kms = LocalKMS(descriptor.node_id, block_size_bits)
        self.bus = bus
        self.notifications = notifications
        self.rng = rng if rng is not None else np.random.default_rng(settings.default_seed)
        self.low_watermark_bits = (low_watermark_bits if low_watermark_bits is not None
                                   else settings.low_watermark_bits)
        self.relay_mode = relay_mode
        self.auth_overhead_bits_per_hop = (auth_overhead_bits_per_hop if auth_overhead_bits_per_hop is not None
                                           else settings.auth_overhead_bits_per_hop)
        self.clock = clock or (lambda: 0.0)
        self.classical = classical
        self.classical_seed = settings.default_seed if classical_seed is None else classical_seed
        self.relay_records: List[RelayRecord] = []
        self.relays: Dict[str, RelayContext] = {}
        self.relay_outcomes: Dict[str, Union[RelayRecord, QKDNetworkError]] = {}
        self.directives_executed = 0
        self._relay_seq = 0

        self._handlers: Dict[DirectiveKind, Callable[[Dict[str, Any]], Dict[str, Any]]] = {
            DirectiveKind.CREATE_LINK_ENDPOINT: self._create_link_endpoint,
            DirectiveKind.ACTIVATE_LINK: self._activate_link,
            DirectiveKind.TEARDOWN: self._teardown,
            DirectiveKind.SET_PROFILE: self._set_profile,
        }
        self._peer_handlers: Dict[str, PeerHandler] = {
            "session_open": self._on_session_open,
            "reserve": self._on_reserve,
            "session_close": self._on_session_close,
            "relay_reserve": self._on_relay_reserve,
            "relay_ready": self._on_relay_ready,
            "relay_frame": self._on_relay_frame,
            "relay_delivered": self._on_relay_delivered,
            "relay_abort": self._on_relay_abort,
        }
        bus.attach(agent_address(self.node_id), self.handle_message)

    @property
    def node_id(self) -> str:
        return self.state.node.node_id

    # Southbound

    def handle_message(self, message) -> None:
        """Bus entry point: directives are queued and drained FIFO, peer messages applied."""
        if isinstance(message, Directive):
            self.state.pending_directives.append(message)
            self.process_pending()
        elif isinstance(message, PeerMessage):
            self.handle_peer_message(message)
        else:
            log_debug("warning", message="agent ignored message", node=self.node_id,
                      kind=type(message).__name__)

    def process_pending(self) -> List[DirectiveAck]:
        acks = []
        while self.state.pending_directives:
            directive = self.state.pending_directives.pop(0)
            ack = self.apply_directive(directive)
            if ack is not None:
                self.bus.send(CONTROLLER_ADDRESS, ack)
                acks.append(ack)
        return acks

    def apply_directive(self, directive: Directive) -> Optional[DirectiveAck]:
        """Execute a directive once; a replayed directive_id returns the remembered ack.

        open_relay is acknowledged when its relay completes, so a relay that
        got under way returns None here and acks later over the bus.
        """
        remembered = self.memo.get(directive.directive_id)
        if remembered is not None:
            log_debug("ack", message="replayed directive", id=directive.directive_id,
                      node=self.node_id)
            return remembered
        if any(ctx.directive_id == directive.directive_id for ctx in self.relays.values()):
            log_debug("ack", message="directive still in progress", id=directive.directive_id,
                      node=self.node_id)
            return None

        if directive.target_node != self.node_id:
            return DirectiveAck(directive_id=directive.directive_id, node_id=self.node_id,
                                ok=False, error_code="WRONG_TARGET",
                                message=f"directive targets '{directive.target_node}'")
        self.directives_executed += 1
        try:
            if directive.kind == DirectiveKind.OPEN_RELAY:
                self.start_relay(directive.payload["virtual_link_id"],
                                 int(directive.payload["length_bits"]),
                                 directive_id=directive.directive_id)
                return None
            result = self._handlers[directive.kind](directive.payload)
            ack = DirectiveAck(directive_id=directive.directive_id, node_id=self.node_id,
                               result=result)
        except QKDNetworkError as e:
            ack = DirectiveAck(directive_id=directive.directive_id, node_id=self.node_id,
                               ok=False, error_code=e.error_code, message=e.message)
        except (KeyError, TypeError, ValidationError) as e:
            ack = DirectiveAck(directive_id=directive.directive_id, node_id=self.node_id,
                               ok=False, error_code="MALFORMED_PAYLOAD",
                               message=f"malformed {directive.kind.value} payload: {e}")
        return self._settle(ack)

    def _settle(self, ack: DirectiveAck) -> DirectiveAck:
        if not ack.ok:
            log_error("directive_refused", ack.message or "", node=self.node_id,
                      id=ack.directive_id, error_code=ack.error_code)
        self.memo.remember(ack)
        return ack

    def _ack_later(
        self, directive_id: str, result: Optional[Dict[str, Any]] = None,
        error: Optional[QKDNetworkError] = None
    ) -> None:
        """Send the ack of a directive whose work finished after it returned."""
        if error is not None:
            ack = DirectiveAck(directive_id=directive_id, node_id=self.node_id, ok=False,
                               error_code=error.error_code, message=error.message)
        else:
            ack = DirectiveAck(directive_id=directive_id, node_id=self.node_id, result=result or {})
        self.bus.send(CONTROLLER_ADDRESS, self._settle(ack))

    def _create_link_endpoint(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        link = Link.model_validate(payload["link"])
        if self.node_id not in link.endpoints:
            raise DirectiveError(f"'{self.node_id}' is not an endpoint of '{link.link_id}'",
                                 error_code="NOT_AN_ENDPOINT")
        if link.link_id in self.state.link_endpoints:
            raise DirectiveError(f"link '{link.link_id}' already configured here",
                                 error_code="LINK_EXISTS")

        if link.kind == LinkKind.PHYSICAL:
            iface_id = payload["iface_id"]
            iface = self.state.node.get_interface(iface_id)
            if iface is None:
                raise DirectiveError(f"unknown interface '{iface_id}'", error_code="UNKNOWN_INTERFACE")
            if iface.attached_link is not None or iface.status != InterfaceStatus.IDLE:
                raise DirectiveError(
                    f"interface '{iface_id}' is {iface.status.value} on '{iface.attached_link}'",
                    error_code="INTERFACE_CONFLICT")
            self._update_interface(iface_id, attached_link=link.link_id)
            endpoint = LinkEndpoint(link=link, iface_id=iface_id, role=iface.role)
        else:
            endpoint = LinkEndpoint(link=link, hops=list(payload["hops"]))

        self.kms.store.open_link(link.link_id)
        self.state.link_endpoints[link.link_id] = endpoint
        return {"link_id": link.link_id, "iface_id": endpoint.iface_id}

    def _activate_link(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        endpoint = self._endpoint(payload["link_id"])
        endpoint.link = endpoint.link.model_copy(update={"status": LinkStatus.ACTIVE})
        if endpoint.iface_id is not None:
            self._update_interface(endpoint.iface_id, status=InterfaceStatus.GENERATING)
        self.emit_notification(NotificationKind.LINK_STATUS,
                               {"link_id": endpoint.link.link_id, "status": LinkStatus.ACTIVE.value})
        return {"link_id": endpoint.link.link_id, "status": LinkStatus.ACTIVE.value}

    def _teardown(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        link_id = payload["link_id"]
        endpoint = self.state.link_endpoints.pop(link_id, None)
        if endpoint is None:
            return {"link_id": link_id, "removed": False}
        if endpoint.iface_id is not None:
            self._update_interface(endpoint.iface_id, attached_link=None, status=InterfaceStatus.IDLE)
        closed = self.kms.abandon_link_sessions(link_id)
        final = self.kms.store.drop_link(link_id)
        self.state.watermark_armed.discard(link_id)
        self.emit_notification(NotificationKind.LINK_STATUS,
                               {"link_id": link_id, "status": LinkStatus.DOWN.value})
        return {"link_id": link_id, "removed": True, "sessions_closed": closed,
                "final_counters": final.model_dump()}

    def _set_profile(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        endpoint = self._endpoint(payload["link_id"])
        if endpoint.link.kind != LinkKind.PHYSICAL:
            raise DirectiveError("rate profiles apply to physical links only",
                                 error_code="WRONG_LINK_KIND")
        profile = RateProfile.model_validate(payload["rate_profile"])
        endpoint.link = endpoint.link.model_copy(update={"rate_profile": profile})
        return {"link_id": endpoint.link.link_id}

    # Status and notifications

    def report_status(self) -> NodeStatusReport:
        """Interface states, per-link counters, connected applications and their usage."""
        link_ids = self.kms.store.link_ids()
        return NodeStatusReport(
            node_id=self.node_id,
            interfaces=[InterfaceState(iface_id=i.iface_id, status=i.status,
                                       attached_link=i.attached_link)
                        for i in self.state.node.interfaces],
            links={link_id: self.kms.store.counters(link_id) for link_id in link_ids},
            allocatable={link_id: self.kms.store.allocatable_bits(link_id) for link_id in link_ids},
            applications={app_id: usage.model_copy()
                          for app_id, usage in sorted(self.kms.usage.items())},
            connected_apps=sorted(self.state.applications),
        )

    def emit_notification(self, kind: NotificationKind, payload: Dict[str, Any]) -> Notification:
        self.state.notification_seq += 1
        notification = Notification(topic=NOTIFICATION_TOPICS[kind], emitter=self.node_id,
                                    kind=kind, payload=payload, seq=self.state.notification_seq)
        self.notifications.publish(notification)
        return notification

    def check_watermarks(self) -> List[str]:
        """Edge-triggered low-key check on allocatable key: a link fires once when it falls below the mark."""
        fired = []
        for link_id in self.kms.store.link_ids():
            allocatable = self.kms.store.allocatable_bits(link_id)
            if allocatable >= self.low_watermark_bits:
                self.state.watermark_armed.add(link_id)
            elif link_id in self.state.watermark_armed:
                self.state.watermark_armed.discard(link_id)
                self.emit_notification(NotificationKind.KEY_LOW_WATERMARK, {
                    "link_id": link_id, "allocatable_bits": allocatable,
                    "available_bits": self.kms.store.available_bits(link_id)})
                fired.append(link_id)
        return fired

    # Physical layer

    def ingest_blocks(self, link_id: str, blocks: List[KeyBlock]) -> StoreCounters:
        counters = self.kms.ingest_blocks(link_id, blocks)
        self.check_watermarks()
        return counters

    def set_interface_status(self, iface_id: str, status: InterfaceStatus) -> None:
        self._update_interface(iface_id, status=status)

    # Applications

    def connect_application(self, app_id: str, peer_app: Optional[str] = None) -> Notification:
        if app_id in self.state.applications:
            raise ApplicationError(f"Application '{app_id}' already connected at '{self.node_id}'",
                                   error_code="DUPLICATE_APPLICATION", app_id=app_id)
        self.state.applications[app_id] = peer_app
        self.kms.register_application(app_id)
        return self.emit_notification(NotificationKind.APP_CONNECTED,
                                      {"app_id": app_id, "peer_app": peer_app})

    def disconnect_application(self, app_id: str) -> Notification:
        self._require_app(app_id)
        for session in list(self.kms.sessions.values()):
            if session.state == SessionState.OPEN and session.role_of(self.node_id, app_id):
                self.close_session(session.session_id, app_id)
        del self.state.applications[app_id]
        return self.emit_notification(NotificationKind.APP_DISCONNECTED, {"app_id": app_id})

    def open_session(self, session: KeySession) -> KeySession:
        """Initiator side: open locally, tell the responder's agent, notify the controller."""
        self._require_app(session.initiator_app)
        if session.initiator_node != self.node_id:
            raise KeyDeliveryError(f"'{self.node_id}' is not the initiator node of the session",
                                   error_code="ROLE_VIOLATION", session_id=session.session_id)
        self._require_hybrid(session)
        self.kms.open_session(session)
        self.send_peer(session.responder_node, "session_open", session.session_id,
                       {"session": session.model_dump(mode="json")})
        self.emit_notification(NotificationKind.APP_CONNECTED,
                               {"app_id": session.initiator_app, "session_id": session.session_id})
        return session

    def get_key(self, session_id: str, app_id: str, count: int, size_bits: int) -> List[DeliveredKey]:
        """Initiator: allocate keys and reserve the same blocks at the responder."""
        session = self.kms.sessions.get(session_id)
        if session is not None and count > 0 and size_bits > 0:
            endpoint = self.state.link_endpoints.get(session.serving_link)
            if endpoint is not None and endpoint.link.kind == LinkKind.VIRTUAL \
                    and self.relay_mode == ON_DEMAND \
                    and session.role_of(self.node_id, app_id) == "initiator":
                self._top_up_for(endpoint, count * -(-size_bits // self.kms.block_size_bits))

        keys, reservations = self.kms.get_key(session_id, app_id, count, size_bits)
        if reservations:
            peer = self.kms.sessions[session_id].responder_node
            self.send_peer(peer, "reserve", session_id,
                           {"reservations": [r.model_dump(mode="json") for r in reservations]})
        self.check_watermarks()
        return self._hybridize(self.kms.sessions[session_id], keys)

    def get_key_with_ids(self, session_id: str, app_id: str, key_ids: List[str]) -> List[DeliveredKey]:
        keys = self.kms.get_key_with_ids(session_id, app_id, key_ids)
        self.check_watermarks()
        return self._hybridize(self.kms.sessions[session_id], keys)

    def close_session(self, session_id: str, app_id: Optional[str] = None) -> int:
        """Close at this end and at the peer. Returns bits released here."""
        session = self.kms.sessions.get(session_id)
        released = self.kms.close_session(session_id)
        peer = session.responder_node if session.initiator_node == self.node_id else session.initiator_node
        self.send_peer(peer, "session_close", session_id)
        local_app = app_id or (session.initiator_app if session.initiator_node == self.node_id
                               else session.responder_app)
        self.emit_notification(NotificationKind.APP_DISCONNECTED,
                               {"app_id": local_app, "session_id": session_id})
        return released

    def _hybridize(self, session: KeySession, keys: List[DeliveredKey]) -> List[DeliveredKey]:
        """Hybrid sessions hand out QKD key XOR a classically agreed key of the same id."""
        if not session.qos.hybrid:
            return keys
        return [key.model_copy(update={"bytes": hybrid_combine(key.bytes, classical_key(
                    self.classical_seed, session.session_id, key.key_id, key.size_bits))})
                for key in keys]

    def _require_hybrid(self, session: KeySession) -> None:
        if session.qos.hybrid and Capability.SUPPORTS_HYBRID not in self.state.node.capabilities:
            raise KeyDeliveryError(f"'{self.node_id}' does not support hybrid keys",
                                   error_code="HYBRID_UNSUPPORTED", session_id=session.session_id)

    # Peer messages

    def send_peer(
        self, node_id: str, kind: str, session_id: str, payload: Optional[Dict[str, Any]] = None
    ) -> PeerMessage:
        """Send to another agent over the classical network."""
        route = (self.classical.route(self.node_id, node_id) if self.classical is not None
                 else [self.node_id, node_id])
        message = PeerMessage(kind=kind, sender=self.node_id, session_id=session_id,
                              payload=payload or {}, route=route)
        self.bus.send(agent_address(node_id), message)
        return message

    def handle_peer_message(self, message: PeerMessage) -> None:
        """Dispatch by kind; failures are logged, never raised into the bus."""
        handler = self._peer_handlers.get(message.kind)
        if handler is None:
            log_debug("warning", message="unknown peer message", kind=message.kind)
            return
        try:
            handler(message)
        except QKDNetworkError as e:
            log_error("peer_message_failed", e.message, node=self.node_id, kind=message.kind,
                      session=message.session_id, error_code=e.error_code)

    def _on_session_open(self, message: PeerMessage) -> None:
        session = KeySession.model_validate(message.payload["session"])
        self._require_hybrid(session)
        self.kms.open_session(session)

    def _on_reserve(self, message: PeerMessage) -> None:
        self.kms.reserve_for_peer(message.session_id, [
            KeyReservation.model_validate(r) for r in message.payload["reservations"]])

    def _on_session_close(self, message: PeerMessage) -> None:
        session = self.kms.sessions.get(message.session_id)
        if session is not None and session.state == SessionState.OPEN:
            self.kms.close_session(message.session_id)

    # Relay

    def start_relay(
        self,
        virtual_link_id: str,
        length_bits: int,
        provision_blocks: int = 0,
        directive_id: Optional[str] = None
    ) -> str:
        """Reserve this node's first-hop pad and send the reservation down the path.

        Every node on the path reserves its pads before any is consumed; the
        destination then answers relay_ready and the key travels hop by hop.
        Returns the relay id.
        """
        endpoint = self._virtual_endpoint(virtual_link_id)
        if length_bits <= 0:
            raise RelayError("zero-length key refused", error_code="ZERO_LENGTH_KEY",
                             details={"length_bits": length_bits})
        path, hops = orient_path(endpoint.link, endpoint.hops or [], self.node_id)
        n_blocks = pad_blocks_needed(length_bits, self.auth_overhead_bits_per_hop,
                                     self.kms.block_size_bits)
        check_hop_pad(self.kms, hops[0], 0, n_blocks * self.kms.block_size_bits)

        self._relay_seq += 1
        relay_id = f"r-{self.node_id}-{self._relay_seq:06d}"
        pad = self.kms.store.take(hops[0], n_blocks, BlockState.RESERVED)
        block_ids = [b.block_id for b in pad]
        self.state.relay_holds[relay_id] = {hops[0]: block_ids}
        self.relays[relay_id] = RelayContext(
            relay_id=relay_id, virtual_link_id=virtual_link_id, path=path, hops=hops,
            length_bits=length_bits, n_blocks=n_blocks, provision_blocks=provision_blocks,
            directive_id=directive_id)
        try:
            self.send_peer(path[1], "relay_reserve", relay_id, {
                "virtual_link_id": virtual_link_id, "path": path, "hops": hops,
                "hop_index": 0, "block_ids": block_ids, "n_blocks": n_blocks})
        except QKDNetworkError:
            self._release_holds(relay_id)
            del self.relays[relay_id]
            raise
        log_debug("relay", message="reservation sent", relay=relay_id, virtual_link=virtual_link_id)
        return relay_id

    def relay(self, virtual_link_id: str, length_bits: int) -> RelayRecord:
        """Relay a fresh key from this endpoint to the other end of a virtual link."""
        return self._await_relay(self.start_relay(virtual_link_id, length_bits))

    def provision(self, virtual_link_id: str, n_blocks: int) -> RelayRecord:
        """Relay whole blocks into both ends' virtual-link stores."""
        record = self._await_relay(self.start_relay(
            virtual_link_id, n_blocks * self.kms.block_size_bits, provision_blocks=n_blocks))
        log_step("relay", action="provisioned", virtual_link=virtual_link_id,
                 blocks=n_blocks, node=self.node_id)
        return record

    def top_up(self, virtual_link_id: str, target_bits: int) -> Optional[RelayRecord]:
        """Provision until the virtual link holds target_bits of unallocated key."""
        endpoint = self._virtual_endpoint(virtual_link_id)
        n_blocks = -(-target_bits // self.kms.block_size_bits)
        return self._top_up_for(endpoint, n_blocks)

    def _top_up_for(self, endpoint: LinkEndpoint, n_blocks: int) -> Optional[RelayRecord]:
        have = self.kms.store.allocatable_bits(endpoint.link.link_id) // self.kms.block_size_bits
        if have >= n_blocks:
            return None
        return self.provision(endpoint.link.link_id, n_blocks - have)

    def _await_relay(self, relay_id: str) -> RelayRecord:
        self.bus.pump()
        outcome = self.relay_outcomes.pop(relay_id, None)
        if outcome is None:
            raise RelayError(f"relay '{relay_id}' did not complete", error_code="RELAY_INCOMPLETE")
        if isinstance(outcome, QKDNetworkError):
            raise outcome
        return outcome

    def _on_relay_reserve(self, message: PeerMessage) -> None:
        """Claim the incoming pad, then reserve the outgoing one or report ready."""
        relay_id, payload = message.session_id, message.payload
        path, hops = payload["path"], payload["hops"]
        position = payload["hop_index"] + 1
        incoming = hops[payload["hop_index"]]
        needed = payload["n_blocks"] * self.kms.block_size_bits
        try:
            check_hop_pad(self.kms, incoming, payload["hop_index"], needed)
            self.kms.store.claim(incoming, payload["block_ids"], BlockState.RESERVED)
            holds = self.state.relay_holds.setdefault(relay_id, {})
            holds[incoming] = list(payload["block_ids"])
            if position == len(path) - 1:
                self.send_peer(path[0], "relay_ready", relay_id,
                               {"virtual_link_id": payload["virtual_link_id"]})
                return
            outgoing = hops[position]
            check_hop_pad(self.kms, outgoing, position, needed)
            pad = self.kms.store.take(outgoing, payload["n_blocks"], BlockState.RESERVED)
            holds[outgoing] = [b.block_id for b in pad]
            self.send_peer(path[position + 1], "relay_reserve", relay_id,
                           {**payload, "hop_index": position, "block_ids": holds[outgoing]})
        except QKDNetworkError as e:
            self._abort_relay(relay_id, path, position, e)

    def _on_relay_ready(self, message: PeerMessage) -> None:
        """Source: every pad is reserved; draw the key and send it over the first hop."""
        relay_id = message.session_id
        ctx = self.relays.get(relay_id)
        if ctx is None:
            log_debug("warning", message="ready for unknown relay", relay=relay_id)
            return
        try:
            block_ids = self.state.relay_holds.get(relay_id, {}).get(ctx.hops[0], [])
            pad = self.kms.store.consume_reserved(ctx.hops[0], block_ids)
            self.state.relay_holds.pop(relay_id, None)
            ctx.key = draw_relay_key(self.rng, ctx.length_bits)
            ctx.key_id = relay_key_id(ctx.virtual_link_id, ctx.hops[0], block_ids[0], ctx.length_bits)
            frame = seal_hop(pad, ctx.virtual_link_id, 0, ctx.hops[0], ctx.length_bits, ctx.key)
            self.send_peer(ctx.path[1], "relay_frame", relay_id, {
                "virtual_link_id": ctx.virtual_link_id, "path": ctx.path, "hops": ctx.hops,
                "key_id": ctx.key_id, "length_bits": ctx.length_bits,
                "provision_blocks": ctx.provision_blocks,
                "pad_bits": ctx.n_blocks * self.kms.block_size_bits,
                "frame": frame.model_dump()})
        except QKDNetworkError as e:
            self._abort_relay(relay_id, ctx.path, 0, e, downstream=True)

    def _on_relay_frame(self, message: PeerMessage) -> None:
        """Decrypt with the incoming pad; forward under the outgoing pad, or keep the key at the destination."""
        relay_id, payload = message.session_id, message.payload
        frame = RelayFrame.model_validate(payload["frame"])
        path, hops = payload["path"], payload["hops"]
        position = frame.hop_index + 1
        try:
            holds = self.state.relay_holds.get(relay_id, {})
            pad = self.kms.store.consume_reserved(frame.hop_link_id, frame.block_ids)
            key = open_hop(pad, frame, payload["length_bits"])
            if position == len(path) - 1:
                self.state.relay_holds.pop(relay_id, None)
                self._materialize(payload["virtual_link_id"], payload["key_id"], key,
                                  payload["length_bits"], payload["provision_blocks"])
                self.send_peer(path[0], "relay_delivered", relay_id, {
                    "virtual_link_id": payload["virtual_link_id"], "key_id": payload["key_id"],
                    "length_bits": payload["length_bits"],
                    "provisioned_bits": payload["provision_blocks"] * self.kms.block_size_bits})
                return
            outgoing = hops[position]
            if outgoing not in holds:
                raise RelayError(f"no pad reserved on '{outgoing}' for relay '{relay_id}'",
                                 error_code="RELAY_NOT_RESERVED")
            pad = self.kms.store.consume_reserved(outgoing, holds[outgoing])
            self.state.relay_holds.pop(relay_id, None)
            forward = seal_hop(pad, payload["virtual_link_id"], position, outgoing,
                               payload["length_bits"], key)
            self.send_peer(path[position + 1], "relay_frame", relay_id,
                           {**payload, "frame": forward.model_dump()})
        except QKDNetworkError as e:
            self._abort_relay(relay_id, path, position, e, downstream=True)

    def _on_relay_delivered(self, message: PeerMessage) -> None:
        """Source: the destination holds the key; keep our copy and account for the relay."""
        relay_id = message.session_id
        ctx = self.relays.pop(relay_id, None)
        if ctx is None:
            log_debug("warning", message="delivery of unknown relay", relay=relay_id)
            return
        try:
            self._materialize(ctx.virtual_link_id, ctx.key_id, ctx.key, ctx.length_bits,
                              ctx.provision_blocks)
        except QKDNetworkError as e:
            self._finish_relay(ctx, error=e)
            return
        record = relay_record(ctx.virtual_link_id, ctx.key_id, ctx.length_bits, ctx.hops,
                              ctx.n_blocks * self.kms.block_size_bits,
                              self.auth_overhead_bits_per_hop, self.clock())
        self.relay_records.append(record)
        log_relay(ctx.virtual_link_id, ctx.length_bits, len(ctx.hops), source=ctx.path[0],
                  destination=ctx.path[-1], key_id=ctx.key_id)
        self._finish_relay(ctx, record=record)

    def _on_relay_abort(self, message: PeerMessage) -> None:
        relay_id, payload = message.session_id, message.payload
        path = payload["path"]
        position = path.index(self.node_id)
        self._release_holds(relay_id)
        if payload["direction"] == "forward":
            if position < len(path) - 1:
                self.send_peer(path[position + 1], "relay_abort", relay_id, payload)
        elif position > 0:
            self.send_peer(path[position - 1], "relay_abort", relay_id, payload)
        else:
            ctx = self.relays.pop(relay_id, None)
            if ctx is not None:
                self._finish_relay(ctx, error=relay_failure(payload))

    def _abort_relay(
        self, relay_id: str, path: List[str], position: int, error: QKDNetworkError,
        downstream: bool = False
    ) -> None:
        """Release this node's pads and unwind the relay toward the source, and past us if asked."""
        log_error("relay_aborted", error.message, node=self.node_id, relay=relay_id,
                  error_code=error.error_code)
        self._release_holds(relay_id)
        payload = {"path": path, "error_code": error.error_code, "message": error.message,
                   "details": error.details}
        if downstream and position < len(path) - 1:
            self.send_peer(path[position + 1], "relay_abort", relay_id,
                           {**payload, "direction": "forward"})
        if position > 0:
            self.send_peer(path[position - 1], "relay_abort", relay_id,
                           {**payload, "direction": "back"})
        else:
            ctx = self.relays.pop(relay_id, None)
            if ctx is not None:
                self._finish_relay(ctx, error=error)

    def _finish_relay(
        self, ctx: RelayContext, record: Optional[RelayRecord] = None,
        error: Optional[QKDNetworkError] = None
    ) -> None:
        if ctx.directive_id is not None:
            self._ack_later(ctx.directive_id,
                            result={"record": record.model_dump(mode="json")} if record else None,
                            error=error)
        else:
            self.relay_outcomes[ctx.relay_id] = record if error is None else error

    def _release_holds(self, relay_id: str) -> None:
        for link_id, block_ids in self.state.relay_holds.pop(relay_id, {}).items():
            if self.kms.store.has_link(link_id):
                self.kms.store.release(link_id, block_ids)

    def _materialize(
        self, virtual_link_id: str, key_id: str, key: bytes, length_bits: int, provision_blocks: int
    ) -> None:
        """Relayed key lands as a delivered key, or as blocks of the virtual-link store."""
        if provision_blocks:
            self.ingest_blocks(virtual_link_id, split_into_blocks(
                key, virtual_link_id, self.kms.store.next_block_id(virtual_link_id),
                provision_blocks, self.kms.block_size_bits, self.clock()))
        else:
            self.kms.store_relayed_key(DeliveredKey(key_id=key_id, bytes=key, session_id="relay",
                                                    size_bits=length_bits))

    # Internals

    def _endpoint(self, link_id: str) -> LinkEndpoint:
        endpoint = self.state.link_endpoints.get(link_id)
        if endpoint is None:
            raise LinkError(f"Link '{link_id}' not configured at '{self.node_id}'",
                            error_code="UNKNOWN_LINK", link_id=link_id)
        return endpoint

    def _virtual_endpoint(self, link_id: str) -> LinkEndpoint:
        endpoint = self._endpoint(link_id)
        if endpoint.link.kind != LinkKind.VIRTUAL or not endpoint.link.is_active:
            raise LinkError(f"Link '{link_id}' is not an active virtual link",
                            error_code="WRONG_LINK_KIND", link_id=link_id)
        return endpoint

    def _require_app(self, app_id: str) -> None:
        if app_id not in self.state.applications:
            raise ApplicationError(f"unregistered application '{app_id}' at '{self.node_id}'",
                                   error_code="UNREGISTERED_APPLICATION", app_id=app_id)

    def _update_interface(self, iface_id: str, **changes) -> None:
        iface = self.state.node.get_interface(iface_id)
        self.state.node = self.state.node.with_interface(iface.model_copy(update=changes))
