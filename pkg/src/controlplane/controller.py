"""SDN controller: central topology database, link orchestration and application registry."""

from collections import Counter
from typing import Callable, Dict, List, Optional

from .bus import CONTROLLER_ADDRESS, MessageBus, NotificationBus, agent_address
from .paths import compute_path
from .spectrum import assign_spectrum
from ..config import settings
from ..linksim import DEFAULT_RATE_PROFILE, effective_loss, link_key_rate
from ..models.control import (
    ControllerState, Directive, DirectiveAck, DirectiveKind, Notification,
    NotificationKind, NodeStatusReport, PathConstraints)
from ..models.keys import AppUsage, KeySession, QoS, RelayRecord
from ..models.physical import RateProfile, SlotKind
from ..models.topology import (
    ApplicationRecord, Capability, FiberSpec, InterfaceRole, InterfaceStatus, Link, LinkKind,
    LinkStatus, NodeDescriptor, Topology)
from ..models.validation import underlying_physical_links, validate_topology
from ..relay import establish_virtual_link
from ..utils.exceptions import (
    ApplicationError, DirectiveError, KeyDeliveryError, LinkError, QKDNetworkError,
    RelayError, RoutingError, TopologyError)
from ..utils.logging_config import log_ack, log_debug, log_directive, log_error, log_step


def app_key(app_id: str, node_id: str) -> str:
    """Registry key of an application: app ids are unique per node only."""
    return f"{app_id}@{node_id}"


class SDNController:
    """Single writer of the topology. Talks to agents only through directives and notifications."""

    def __init__(
        self,
        bus: MessageBus,
        notifications: NotificationBus,
        clock: Optional[Callable[[], float]] = None,
        max_loss_db: Optional[float] = None,
        grid_slots: Optional[int] = None,
        channel_penalty_db: Optional[float] = None
    ):
        self.bus = bus
        self.notifications = notifications
        self.clock = clock or (lambda: 0.0)
        self.max_loss_db = max_loss_db if max_loss_db is not None else settings.max_loss_db
        self.grid_slots = grid_slots or settings.grid_slots
        self.channel_penalty_db = (channel_penalty_db if channel_penalty_db is not None
                                   else settings.channel_penalty_db)

        self.topology = Topology()
        self.applications: Dict[str, ApplicationRecord] = {}
        self.expected_rates: Dict[str, float] = {}
        self.activated_at: Dict[str, float] = {}
        self.status_reports: Dict[str, NodeStatusReport] = {}
        self.relay_records: List[RelayRecord] = []
        self.usage: Dict[str, AppUsage] = {}
        self.low_key_links: Dict[str, int] = {}
        self.link_events: List[Dict[str, str]] = []
        self.notification_counts: Counter = Counter()
        self.duplicates_dropped = 0

        self._last_seq: Dict[str, int] = {}
        self._acks: Dict[str, DirectiveAck] = {}
        self._directive_seq = 0
        self._session_seq = 0

        bus.attach(CONTROLLER_ADDRESS, self.handle_message)
        notifications.subscribe(CONTROLLER_ADDRESS, "qkd.app.*")
        notifications.subscribe(CONTROLLER_ADDRESS, "qkd.link.*")

    # Nodes

    def register_node(self, descriptor: NodeDescriptor) -> NodeDescriptor:
        """Add a node to the topology."""
        if descriptor.node_id in self.topology.nodes:
            raise TopologyError(f"Node '{descriptor.node_id}' already registered",
                                error_code="DUPLICATE_NODE")
        trial = Topology(nodes={descriptor.node_id: descriptor})
        violations = validate_topology(trial)
        if violations:
            raise TopologyError(f"Node '{descriptor.node_id}' violates the topology model",
                                violations=violations)
        self.topology.nodes[descriptor.node_id] = descriptor
        log_step("node", action="registered", node=descriptor.node_id,
                 interfaces=len(descriptor.interfaces),
                 capabilities=sorted(c.value for c in descriptor.capabilities))
        return descriptor

    # Physical links

    def create_physical_link(
        self,
        node_a: str,
        iface_a: str,
        node_b: str,
        iface_b: str,
        fiber: FiberSpec,
        n_classical: int = 0,
        rate_profile: Optional[RateProfile] = None,
        pilot_after_channel: Optional[int] = None,
        link_id: Optional[str] = None
    ) -> Link:
        """Plan, configure and activate a QKD link between a transmitter and a receiver."""
        ifaces = []
        for node_id, iface_id in ((node_a, iface_a), (node_b, iface_b)):
            iface = self._node(node_id).get_interface(iface_id)
            if iface is None:
                raise TopologyError(f"Unknown interface '{node_id}.{iface_id}'",
                                    error_code="UNKNOWN_INTERFACE")
            ifaces.append(iface)
        if {i.role for i in ifaces} != {InterfaceRole.TRANSMITTER, InterfaceRole.RECEIVER}:
            raise LinkError(
                f"role mismatch: '{node_a}.{iface_a}' and '{node_b}.{iface_b}' are both "
                f"{ifaces[0].role.value}s", error_code="ROLE_MISMATCH")
        for node_id, iface in zip((node_a, node_b), ifaces):
            if iface.attached_link is not None or iface.status != InterfaceStatus.IDLE:
                raise LinkError(f"interface '{node_id}.{iface.iface_id}' is busy",
                                error_code="INTERFACE_BUSY",
                                details={"attached_link": iface.attached_link})

        loss = effective_loss(fiber, n_classical, self.channel_penalty_db)
        if loss > self.max_loss_db:
            raise LinkError(
                f"link infeasible: {loss:.2f} dB exceeds the {self.max_loss_db} dB cutoff",
                error_code="LINK_INFEASIBLE",
                details={"loss_db": loss, "max_loss_db": self.max_loss_db})
        spectrum = assign_spectrum(n_classical, self.grid_slots, pilot_after_channel)

        link = Link(
            link_id=link_id or self._free_link_id(f"{node_a}-{node_b}"),
            kind=LinkKind.PHYSICAL,
            endpoints=(node_a, node_b),
            interfaces=(iface_a, iface_b),
            fiber=fiber,
            spectrum=spectrum,
            rate_profile=rate_profile or DEFAULT_RATE_PROFILE,
            n_classical=n_classical,
        )
        if link.link_id in self.topology.links:
            raise LinkError(f"Link '{link.link_id}' already exists",
                            error_code="DUPLICATE_LINK", link_id=link.link_id)
        self.topology.links[link.link_id] = link
        self._attach_interfaces(link, link.link_id)
        violations = validate_topology(self.topology)
        if violations:
            self._forget_link(link)
            raise TopologyError(f"Link '{link.link_id}' violates the topology model",
                                violations=violations)

        log_step("link", action="planned", link=link.link_id, loss_db=round(loss, 3),
                 classical=n_classical, pilot_slot=spectrum.slots_of(SlotKind.PILOT))
        self._configure(link, [
            {"iface_id": iface_a, "role": ifaces[0].role.value},
            {"iface_id": iface_b, "role": ifaces[1].role.value},
        ])
        self.expected_rates[link.link_id] = link_key_rate(link, self.channel_penalty_db)
        log_step("complete", message="physical link active", link=link.link_id,
                 expected_rate_bps=round(self.expected_rates[link.link_id], 1))
        return self.topology.links[link.link_id]

    def set_rate_profile(self, link_id: str, profile: RateProfile) -> Link:
        """Swap the rate profile of an active physical link at the controller and both agents."""
        link = self._link(link_id)
        if not link.is_physical:
            raise LinkError(f"Link '{link_id}' is not physical", error_code="WRONG_LINK_KIND",
                            link_id=link_id)
        acks = self._dispatch([
            self._directive(node_id, DirectiveKind.SET_PROFILE,
                            {"link_id": link_id, "rate_profile": profile.model_dump(mode="json")})
            for node_id in link.endpoints])
        self._raise_on_failure(acks)
        link = link.model_copy(update={"rate_profile": profile})
        self.topology.links[link_id] = link
        self.expected_rates[link_id] = link_key_rate(link, self.channel_penalty_db)
        return link

    # Virtual links

    def compute_path(
        self, src: str, dst: str, constraints: Optional[PathConstraints] = None
    ) -> Optional[List[str]]:
        return compute_path(self.topology, src, dst, constraints, self.observed_available_bits)

    def create_virtual_link(
        self,
        node_a: str,
        node_b: str,
        constraints: Optional[PathConstraints] = None,
        path: Optional[List[str]] = None,
        link_id: Optional[str] = None
    ) -> Link:
        """Route a trusted-relay association between two nodes and configure its endpoints."""
        for node_id in (node_a, node_b):
            self._node(node_id)
        if path is None:
            path = self.compute_path(node_a, node_b, constraints)
            if not path:
                raise RoutingError(f"no relay route between '{node_a}' and '{node_b}'",
                                   details={"constraints": (constraints or PathConstraints()).model_dump()})
            log_step("route", src=node_a, dst=node_b, path=path)

        link = establish_virtual_link(self.topology, node_a, node_b, path, link_id,
                                      status=LinkStatus.PLANNED)
        hops = underlying_physical_links(self.topology, link)
        self._configure(link, [{"hops": hops}, {"hops": hops}])
        log_step("complete", message="virtual link active", link=link.link_id, path=path)
        return self.topology.links[link.link_id]

    def request_relay(
        self, virtual_link_id: str, length_bits: int, source: Optional[str] = None
    ) -> RelayRecord:
        """Have the source endpoint agent relay a fresh key over a virtual link."""
        link = self._link(virtual_link_id)
        if link.kind != LinkKind.VIRTUAL or not link.is_active:
            raise RelayError(f"Link '{virtual_link_id}' is not an active virtual link",
                             error_code="NOT_A_VIRTUAL_LINK")
        source = source or link.endpoints[0]
        if source not in link.endpoints:
            raise RelayError(f"'{source}' is not an endpoint of '{virtual_link_id}'",
                             error_code="NOT_AN_ENDPOINT")
        acks = self._dispatch([self._directive(source, DirectiveKind.OPEN_RELAY, {
            "virtual_link_id": virtual_link_id, "length_bits": length_bits})])
        ack = acks[0]
        if not ack.ok:
            raise RelayError(ack.message or "relay failed", error_code=ack.error_code or "RELAY_ERROR",
                             details={"virtual_link_id": virtual_link_id})
        record = RelayRecord.model_validate(ack.result["record"])
        self.relay_records.append(record)
        return record

    # Teardown

    def teardown_link(self, link_id: str) -> List[str]:
        """Take a link down at both agents; virtual links left without a hop go down too.

        Returns the ids of every link taken down, the requested one first.
        """
        link = self._link(link_id)
        if link.status == LinkStatus.DOWN:
            return []
        removed = [link_id]
        self._teardown_one(link)
        for vl in sorted(self.topology.virtual_links(), key=lambda l: l.link_id):
            if vl.status == LinkStatus.DOWN:
                continue
            try:
                underlying_physical_links(self.topology, vl)
            except LinkError:
                self._teardown_one(vl)
                removed.append(vl.link_id)
        log_step("link", action="teardown", links=removed)
        return removed

    def _teardown_one(self, link: Link) -> None:
        acks = self._dispatch([self._directive(node_id, DirectiveKind.TEARDOWN,
                                               {"link_id": link.link_id})
                               for node_id in link.endpoints])
        for ack in acks:
            if not ack.ok:
                log_error("teardown_failed", ack.message or "", link=link.link_id, node=ack.node_id)
        self._attach_interfaces(link, None)
        self.topology.links[link.link_id] = link.model_copy(update={"status": LinkStatus.DOWN})
        self.expected_rates.pop(link.link_id, None)
        self.activated_at.pop(link.link_id, None)

    # Applications and sessions

    def register_application(
        self, app_id: str, node_id: str, peer_hint: Optional[str] = None
    ) -> ApplicationRecord:
        """Record an application at a node; peer linkage is made symmetric when both are known."""
        self._node(node_id)
        key = app_key(app_id, node_id)
        if key in self.applications:
            raise ApplicationError(f"Application '{app_id}' already registered at '{node_id}'",
                                   error_code="DUPLICATE_APPLICATION", app_id=app_id)
        record = ApplicationRecord(app_id=app_id, host_node=node_id, peer_app=peer_hint,
                                   registered_at=self.clock())
        self.applications[key] = record
        self.usage.setdefault(key, AppUsage())
        if peer_hint:
            for other in self.applications.values():
                if other.app_id == peer_hint and other.host_node != node_id and other.peer_app in (None, app_id):
                    other.peer_app = app_id
        else:
            for other in self.applications.values():
                if other.peer_app == app_id and other.host_node != node_id:
                    record.peer_app = other.app_id
                    break
        log_step("session", action="application registered", app=app_id, node=node_id,
                 peer=record.peer_app)
        return record

    def unregister_application(self, app_id: str, node_id: str) -> None:
        record = self.applications.pop(app_key(app_id, node_id), None)
        if record is None:
            raise ApplicationError(f"unregistered application '{app_id}' at '{node_id}'",
                                   error_code="UNREGISTERED_APPLICATION", app_id=app_id)
        for other in self.applications.values():
            if other.peer_app == app_id:
                other.peer_app = None

    def select_serving_link(self, node_a: str, node_b: str) -> Link:
        """Active physical link first, then virtual; lowest link_id within each kind."""
        candidates = [l for l in self.topology.links_between(node_a, node_b) if l.is_active]
        candidates.sort(key=lambda l: (not l.is_physical, l.link_id))
        if node_a == node_b or not candidates:
            raise KeyDeliveryError(f"no key association between '{node_a}' and '{node_b}'",
                                   error_code="NO_KEY_ASSOCIATION")
        return candidates[0]

    def plan_session(
        self,
        initiator_app: str,
        initiator_node: str,
        responder_app: str,
        responder_node: str,
        qos: Optional[QoS] = None
    ) -> KeySession:
        """Check both applications and pick the serving link for a new session."""
        for app_id, node_id in ((initiator_app, initiator_node), (responder_app, responder_node)):
            if app_key(app_id, node_id) not in self.applications:
                raise ApplicationError(f"unregistered application '{app_id}' at '{node_id}'",
                                       error_code="UNREGISTERED_APPLICATION", app_id=app_id)
        qos = qos or QoS()
        if qos.hybrid:
            lacking = [n for n in (initiator_node, responder_node)
                       if Capability.SUPPORTS_HYBRID not in self._node(n).capabilities]
            if lacking:
                raise KeyDeliveryError(f"hybrid keys need {Capability.SUPPORTS_HYBRID.value} at {lacking}",
                                       error_code="HYBRID_UNSUPPORTED")
        link = self.select_serving_link(initiator_node, responder_node)
        self._session_seq += 1
        return KeySession(
            session_id=f"s-{self._session_seq:06d}",
            initiator_app=initiator_app,
            responder_app=responder_app,
            initiator_node=initiator_node,
            responder_node=responder_node,
            serving_link=link.link_id,
            qos=qos,
        )

    # Inbound traffic

    def handle_message(self, message) -> None:
        if isinstance(message, DirectiveAck):
            self._acks[message.directive_id] = message
            log_ack(message.directive_id, message.ok, node=message.node_id,
                    error_code=message.error_code)
        elif isinstance(message, Notification):
            self.handle_notification(message)
        else:
            log_debug("warning", message="controller ignored message", kind=type(message).__name__)

    def handle_notification(self, notification: Notification) -> bool:
        """Apply a notification once per (emitter, seq). Returns False for duplicates."""
        last = self._last_seq.get(notification.emitter, 0)
        if notification.seq <= last:
            self.duplicates_dropped += 1
            log_debug("notify", message="duplicate dropped", emitter=notification.emitter,
                      seq=notification.seq)
            return False
        self._last_seq[notification.emitter] = notification.seq
        self.notification_counts[notification.kind.value] += 1

        payload = notification.payload
        try:
            if notification.kind == NotificationKind.APP_CONNECTED:
                if "session_id" in payload:
                    self._record_session(payload["app_id"], notification.emitter, payload["session_id"])
                else:
                    self.register_application(payload["app_id"], notification.emitter,
                                              payload.get("peer_app"))
            elif notification.kind == NotificationKind.APP_DISCONNECTED:
                if "session_id" not in payload:
                    self.unregister_application(payload["app_id"], notification.emitter)
            elif notification.kind == NotificationKind.LINK_STATUS:
                self.link_events.append({"node_id": notification.emitter,
                                         "link_id": payload["link_id"],
                                         "status": payload["status"]})
            elif notification.kind == NotificationKind.KEY_LOW_WATERMARK:
                self.low_key_links[payload["link_id"]] = payload.get("allocatable_bits",
                                                                     payload["available_bits"])
        except QKDNetworkError as e:
            log_error("notification_rejected", e.message, emitter=notification.emitter,
                      seq=notification.seq, error_code=e.error_code)
        return True

    def _record_session(self, app_id: str, node_id: str, session_id: str) -> None:
        record = self.applications.get(app_key(app_id, node_id))
        if record is not None and session_id not in record.sessions:
            record.sessions.append(session_id)

    def ingest_status(self, report: NodeStatusReport) -> None:
        """Keep the latest status report of a node and its per-application usage."""
        self.status_reports[report.node_id] = report
        for app_id, counters in report.applications.items():
            self.usage[app_key(app_id, report.node_id)] = counters.model_copy()

    # Queries

    def observed_available_bits(self, link_id: str) -> int:
        """Lowest allocatable count either endpoint last reported; 0 if unreported."""
        link = self.topology.links.get(link_id)
        if link is None:
            return 0
        values = [self.status_reports[n].allocatable_bits(link_id)
                  for n in link.endpoints if n in self.status_reports]
        return min(values) if len(values) == 2 else 0

    def observed_rate(self, link_id: str) -> float:
        """Generated bits per second of active time, from the endpoints' reports."""
        started = self.activated_at.get(link_id)
        elapsed = self.clock() - started if started is not None else 0.0
        if elapsed <= 0:
            return 0.0
        generated = [self.status_reports[n].links[link_id].generated_bits
                     for n in self.topology.links[link_id].endpoints
                     if n in self.status_reports and link_id in self.status_reports[n].links]
        return min(generated) / elapsed if generated else 0.0

    def app_usage(self) -> Dict[str, AppUsage]:
        """Usage of every application ever registered; zero until its node reports."""
        return {key: usage.model_copy() for key, usage in sorted(self.usage.items())}

    def controller_state(self) -> ControllerState:
        """Serializable snapshot of nodes, links, applications and rates."""
        active = sorted(l.link_id for l in self.topology.links.values() if l.is_active)
        return ControllerState(
            topology=self.topology.model_copy(deep=True),
            applications={k: v.model_copy(deep=True) for k, v in sorted(self.applications.items())},
            expected_rates_bps=dict(sorted(self.expected_rates.items())),
            observed_rates_bps={l: self.observed_rate(l) for l in active
                                if self.topology.links[l].is_physical},
            observed_available_bits={l: self.observed_available_bits(l) for l in active},
            app_usage=self.app_usage(),
            relay_records=[r.model_copy() for r in self.relay_records],
        )

    # Directive plumbing

    def _configure(self, link: Link, endpoint_payloads: List[Dict]) -> None:
        """create_link_endpoint at both ends, then activate_link once both acked."""
        document = link.model_dump(mode="json")
        creates = [
            self._directive(node_id, DirectiveKind.CREATE_LINK_ENDPOINT, {"link": document, **extra})
            for node_id, extra in zip(link.endpoints, endpoint_payloads)
        ]
        acks = self._dispatch(creates)
        failed = [a for a in acks if not a.ok]
        if failed:
            self._rollback(link, [a.node_id for a in acks if a.ok])
            self._raise_on_failure(failed)

        acks = self._dispatch([self._directive(node_id, DirectiveKind.ACTIVATE_LINK,
                                               {"link_id": link.link_id})
                               for node_id in link.endpoints])
        failed = [a for a in acks if not a.ok]
        if failed:
            self._rollback(link, list(link.endpoints))
            self._raise_on_failure(failed)

        self.topology.links[link.link_id] = link.model_copy(update={"status": LinkStatus.ACTIVE})
        self.activated_at[link.link_id] = self.clock()

    def _rollback(self, link: Link, configured_nodes: List[str]) -> None:
        if configured_nodes:
            self._dispatch([self._directive(node_id, DirectiveKind.TEARDOWN, {"link_id": link.link_id})
                            for node_id in configured_nodes])
        self._forget_link(link)

    def _raise_on_failure(self, acks: List[DirectiveAck]) -> None:
        for ack in acks:
            if not ack.ok:
                raise DirectiveError(
                    f"agent '{ack.node_id}' refused directive: {ack.message}",
                    error_code=ack.error_code or "DIRECTIVE_ERROR",
                    directive_id=ack.directive_id)

    def _directive(self, target: str, kind: DirectiveKind, payload: Dict) -> Directive:
        self._directive_seq += 1
        return Directive(directive_id=f"d-{self._directive_seq:06d}", target_node=target,
                         kind=kind, payload=payload)

    def _dispatch(self, directives: List[Directive]) -> List[DirectiveAck]:
        """Send directives, run the bus to quiescence and collect one ack per directive."""
        for directive in directives:
            log_directive(directive.directive_id, directive.kind.value, directive.target_node)
            self.bus.send(agent_address(directive.target_node), directive)
        self.bus.pump()
        acks = []
        for directive in directives:
            ack = self._acks.pop(directive.directive_id, None)
            if ack is None:
                raise DirectiveError(f"no acknowledgement from '{directive.target_node}'",
                                     error_code="NO_ACK", directive_id=directive.directive_id)
            acks.append(ack)
        return acks

    def _attach_interfaces(self, link: Link, attached: Optional[str]) -> None:
        if link.interfaces is None:
            return
        for node_id, iface_id in zip(link.endpoints, link.interfaces):
            node = self.topology.nodes[node_id]
            iface = node.get_interface(iface_id)
            if iface is not None:
                self.topology.nodes[node_id] = node.with_interface(
                    iface.model_copy(update={"attached_link": attached}))

    def _forget_link(self, link: Link) -> None:
        self._attach_interfaces(link, None)
        self.topology.links.pop(link.link_id, None)

    def _free_link_id(self, base: str) -> str:
        candidate, n = base, 1
        while candidate in self.topology.links:
            n += 1
            candidate = f"{base}-{n}"
        return candidate

    def _node(self, node_id: str) -> NodeDescriptor:
        node = self.topology.nodes.get(node_id)
        if node is None:
            raise TopologyError(f"Unknown node '{node_id}'", error_code="UNKNOWN_NODE")
        return node

    def _link(self, link_id: str) -> Link:
        link = self.topology.links.get(link_id)
        if link is None:
            raise LinkError(f"Unknown link '{link_id}'", error_code="UNKNOWN_LINK", link_id=link_id)
        return link
