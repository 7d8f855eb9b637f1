"""Simulation runtime wiring the controller, the agents, the buses and the key generators."""

from typing import Dict, List, Optional

import numpy as np

from .eventlog import EventLog
from .scenario import Scenario, WorkloadItem
from .scheduler import EventScheduler
from ..agent import ON_DEMAND, PRE_PROVISIONED, SDNAgent
from ..config import settings
from ..controlplane import (
    DEDICATED_CHANNEL, SERVICE_CHANNEL, ClassicalNetwork, MessageBus, NotificationBus, SDNController, app_key)
from ..linksim import KeyBlockGenerator, link_key_rate, schedule_transmitter, slot_owner, transmitter_groups
from ..models.control import PathConstraints
from ..models.keys import DeliveredKey, KeySession, QoS, RelayRecord
from ..models.physical import RateProfile, SchedulerConfig
from ..models.topology import (
    ApplicationRecord, FiberSpec, InterfaceRole, InterfaceStatus, Link, NodeDescriptor)
from ..utils.exceptions import DomainError, QKDNetworkError, RelayDepletionError
from ..utils.logging_config import log_debug, log_error, log_step


class QKDNetwork:
    """A whole emulated SDQKD network advancing in simulated time."""

    def __init__(
        self,
        seed: Optional[int] = None,
        block_size_bits: Optional[int] = None,
        scheduler_config: Optional[SchedulerConfig] = None,
        relay_mode: str = ON_DEMAND,
        target_buffer_bits: int = 0,
        provision_interval_s: Optional[float] = None,
        low_watermark_bits: Optional[int] = None,
        auth_overhead_bits_per_hop: Optional[int] = None,
        channel_penalty_db: Optional[float] = None,
        max_loss_db: Optional[float] = None,
        grid_slots: Optional[int] = None
    ):
        self.seed = settings.default_seed if seed is None else seed
        self.block_size_bits = block_size_bits or settings.block_size_bits
        self.scheduler_config = scheduler_config or SchedulerConfig(
            calibration_fraction=settings.calibration_fraction, slot_seconds=settings.slot_seconds)
        self.relay_mode = relay_mode
        self.target_buffer_bits = target_buffer_bits
        self.provision_interval_s = provision_interval_s or settings.provision_interval_s
        self.low_watermark_bits = low_watermark_bits
        self.auth_overhead_bits_per_hop = auth_overhead_bits_per_hop
        self.channel_penalty_db = channel_penalty_db

        self.events = EventScheduler()
        self.bus = MessageBus()
        self.event_log = EventLog(self._clock)
        self.bus.tap(self.event_log.observe)
        self.classical = ClassicalNetwork()
        self.notifications = NotificationBus(self.bus)
        self.controller = SDNController(self.bus, self.notifications, clock=self._clock,
                                        max_loss_db=max_loss_db, grid_slots=grid_slots,
                                        channel_penalty_db=channel_penalty_db)
        self.agents: Dict[str, SDNAgent] = {}
        self.generators: Dict[str, KeyBlockGenerator] = {}
        self.rng = np.random.default_rng(self.seed)
        self.delivered_keys: List[DeliveredKey] = []
        self.workload_failures: List[Dict[str, str]] = []
        self._slot_index = 0
        self._started = False

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "QKDNetwork":
        network = cls(
            seed=scenario.seed,
            block_size_bits=scenario.block_size_bits,
            scheduler_config=scenario.scheduler,
            relay_mode=scenario.relay_mode,
            target_buffer_bits=scenario.target_buffer_bits,
            provision_interval_s=scenario.provision_interval_s,
            low_watermark_bits=scenario.low_watermark_bits,
            auth_overhead_bits_per_hop=scenario.auth_overhead_bits_per_hop,
            channel_penalty_db=scenario.channel_penalty_db,
            max_loss_db=scenario.max_loss_db,
            grid_slots=scenario.grid_slots,
        )
        network.setup(scenario)
        return network

    @property
    def now(self) -> float:
        return self.events.now

    def _clock(self) -> float:
        return self.events.now

    def setup(self, scenario: Scenario) -> None:
        """Register nodes, bring up the physical links and queue the workload."""
        log_step("start", message="network setup", scenario=scenario.name, seed=self.seed)
        for node in scenario.nodes:
            self.add_node(node.to_descriptor())
        for spec in scenario.links:
            self.create_physical_link(
                spec.node_a, spec.iface_a, spec.node_b, spec.iface_b, spec.fiber,
                n_classical=spec.n_classical, rate_profile=spec.resolved_profile(),
                pilot_after_channel=spec.pilot_after_channel, link_id=spec.link_id)
        for channel in scenario.classical_channels:
            self.add_classical_channel(channel.node_a, channel.node_b, channel.fiber, channel.n_classical)
        for item in scenario.workload:
            self.events.schedule(item.at, "workload", lambda item=item: self._run_workload_item(item))
        self.start()
        log_step("complete", message="network setup", nodes=len(self.agents),
                 links=len(self.controller.topology.links))

    def start(self) -> None:
        """Arm the generation tick and, in pre-provisioned mode, the buffer top-up."""
        if self._started:
            return
        self._started = True
        self.events.every("tick", self.scheduler_config.slot_seconds, self._tick)
        if self.relay_mode == PRE_PROVISIONED:
            self.events.every("provision", self.provision_interval_s, self._provision_round)

    def advance(self, seconds: float) -> float:
        """Run simulated time forward; returns the new clock."""
        if seconds < 0:
            raise DomainError(f"cannot advance by {seconds} s", details={"seconds": seconds})
        self.start()
        self.events.run_until(self.now + seconds)
        return self.now

    # Topology

    def add_node(self, descriptor: NodeDescriptor) -> SDNAgent:
        self.controller.register_node(descriptor)
        agent = SDNAgent(
            descriptor, self.bus, self.notifications,
            rng=self.rng,
            block_size_bits=self.block_size_bits,
            low_watermark_bits=self.low_watermark_bits,
            relay_mode=self.relay_mode,
            auth_overhead_bits_per_hop=self.auth_overhead_bits_per_hop,
            clock=self._clock,
            classical=self.classical,
            classical_seed=self.seed,
        )
        self.classical.add_node(descriptor.node_id)
        self.agents[descriptor.node_id] = agent
        return agent

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
        link = self.controller.create_physical_link(
            node_a, iface_a, node_b, iface_b, fiber, n_classical=n_classical,
            rate_profile=rate_profile, pilot_after_channel=pilot_after_channel, link_id=link_id)
        self.generators[link.link_id] = KeyBlockGenerator(
            link, self.seed, self.block_size_bits, self.channel_penalty_db)
        self.classical.add_channel(node_a, node_b, SERVICE_CHANNEL, fiber, n_classical)
        return link

    def create_virtual_link(
        self,
        node_a: str,
        node_b: str,
        constraints: Optional[PathConstraints] = None,
        path: Optional[List[str]] = None,
        link_id: Optional[str] = None
    ) -> Link:
        return self.controller.create_virtual_link(node_a, node_b, constraints, path, link_id)

    def teardown_link(self, link_id: str) -> List[str]:
        removed = self.controller.teardown_link(link_id)
        for removed_id in removed:
            self.generators.pop(removed_id, None)
        return removed

    def set_rate_profile(self, link_id: str, profile: RateProfile) -> Link:
        link = self.controller.set_rate_profile(link_id, profile)
        generator = self.generators[link_id]
        generator.link = link
        generator.rate_bps = link_key_rate(link, self.channel_penalty_db)
        return link

    def add_classical_channel(
        self, node_a: str, node_b: str, fiber: Optional[FiberSpec] = None, n_classical: int = 0
    ) -> None:
        """Dedicated classical fiber between two nodes; agents route peer messages over it."""
        self.agent(node_a)
        self.agent(node_b)
        self.classical.add_channel(node_a, node_b, DEDICATED_CHANNEL, fiber, n_classical)

    # Applications

    def connect_application(self, node_id: str, app_id: str, peer_app: Optional[str] = None) -> ApplicationRecord:
        self.agent(node_id).connect_application(app_id, peer_app)
        self.bus.pump()
        return self.controller.applications[app_key(app_id, node_id)]

    def disconnect_application(self, node_id: str, app_id: str) -> None:
        self.agent(node_id).disconnect_application(app_id)
        self.bus.pump()

    def open_session(
        self,
        initiator_node: str,
        initiator_app: str,
        responder_node: str,
        responder_app: str,
        qos: Optional[QoS] = None
    ) -> KeySession:
        self.agent(initiator_node)
        self.agent(responder_node)
        session = self.controller.plan_session(initiator_app, initiator_node,
                                               responder_app, responder_node, qos)
        self.agent(initiator_node).open_session(session)
        self.bus.pump()
        return session

    def get_key(self, node_id: str, session_id: str, app_id: str, count: int, size_bits: int) -> List[DeliveredKey]:
        keys = self.agent(node_id).get_key(session_id, app_id, count, size_bits)
        self.bus.pump()
        self._log_delivery(node_id, session_id, app_id, keys)
        self.delivered_keys.extend(keys)
        return keys

    def get_key_with_ids(self, node_id: str, session_id: str, app_id: str, key_ids: List[str]) -> List[DeliveredKey]:
        keys = self.agent(node_id).get_key_with_ids(session_id, app_id, key_ids)
        self.bus.pump()
        self._log_delivery(node_id, session_id, app_id, keys)
        self.delivered_keys.extend(keys)
        return keys

    def close_session(self, node_id: str, session_id: str, app_id: Optional[str] = None) -> int:
        released = self.agent(node_id).close_session(session_id, app_id)
        self.bus.pump()
        return released

    def request_relay(self, virtual_link_id: str, length_bits: int, source: Optional[str] = None) -> RelayRecord:
        record = self.controller.request_relay(virtual_link_id, length_bits, source)
        source = source or self.controller.topology.links[virtual_link_id].endpoints[0]
        self.delivered_keys.append(self.agents[source].kms.relayed_keys[record.key_id])
        return record

    def relay_records(self) -> List[RelayRecord]:
        """Every relay performed, in execution order."""
        records = [r for agent in self.agents.values() for r in agent.relay_records]
        return sorted(records, key=lambda r: (r.at, r.virtual_link_id, r.key_id))

    # Time

    def current_duties(self) -> Dict[str, float]:
        duties: Dict[str, float] = {}
        for (node_id, _), link_ids in transmitter_groups(self.controller.topology).items():
            duties.update(schedule_transmitter(node_id, link_ids, self.scheduler_config))
        return duties

    def _tick(self, tick_no: int) -> None:
        """One slot of key generation on every active physical link, then status reporting."""
        dt = self.scheduler_config.slot_seconds
        topology = self.controller.topology
        for (node_id, _), link_ids in transmitter_groups(topology).items():
            duties = schedule_transmitter(node_id, link_ids, self.scheduler_config)
            owner = slot_owner(link_ids, self._slot_index)
            for link_id in link_ids:
                link = topology.links[link_id]
                generator = self.generators.get(link_id)
                if generator is None:
                    continue
                blocks = generator.generate(duties[link_id], dt, self.now)
                if blocks:
                    self.event_log.record("generate", link=link_id, endpoints=list(link.endpoints),
                                          first_block=blocks[0].block_id, last_block=blocks[-1].block_id,
                                          bits=sum(b.size_bits for b in blocks))
                    for endpoint in link.endpoints:
                        self.agents[endpoint].ingest_blocks(link_id, blocks)
                if len(link_ids) > 1:
                    self._rotate_receiver(link, InterfaceStatus.GENERATING if link_id == owner
                                          else InterfaceStatus.CALIBRATING)
        self._slot_index += 1

        for node_id in sorted(self.agents):
            agent = self.agents[node_id]
            agent.check_watermarks()
            self.controller.ingest_status(agent.report_status())
        self.bus.pump()
        log_debug("generate", tick=tick_no, now=round(self.now, 6))

    def _log_delivery(self, node_id: str, session_id: str, app_id: str, keys: List[DeliveredKey]) -> None:
        if not keys:
            return
        block = self.block_size_bits
        self.event_log.record(
            "key_delivery", node=node_id, app=app_id, session=session_id,
            link=self.agents[node_id].kms.sessions[session_id].serving_link, keys=len(keys),
            bits=sum(-(-k.size_bits // block) * block for k in keys))

    def _rotate_receiver(self, link: Link, status: InterfaceStatus) -> None:
        for node_id, iface_id in zip(link.endpoints, link.interfaces or ()):
            iface = self.agents[node_id].state.node.get_interface(iface_id)
            if iface is not None and iface.role == InterfaceRole.RECEIVER:
                self.agents[node_id].set_interface_status(iface_id, status)

    def _provision_round(self, round_no: int) -> None:
        """Top up every active virtual link to the target buffer."""
        for link in sorted(self.controller.topology.virtual_links(), key=lambda l: l.link_id):
            if not link.is_active:
                continue
            try:
                self.agents[link.endpoints[0]].top_up(link.link_id, self.target_buffer_bits)
            except RelayDepletionError as e:
                log_debug("warning", message="provisioning deferred", link=link.link_id,
                          hop=e.hop_link_id)
        self.bus.pump()
        log_debug("relay", message="provisioning round", round=round_no)

    def _run_workload_item(self, item: WorkloadItem) -> None:
        try:
            if item.action == "create_virtual_link":
                self.create_virtual_link(item.node_a, item.node_b,
                                         PathConstraints(min_available_bits=item.min_available_bits),
                                         item.path, item.link_id)
            elif item.action == "relay":
                self.request_relay(item.link_id, item.bits, item.node_a)
            elif item.action == "teardown_link":
                self.teardown_link(item.link_id)
            elif item.action == "key_request":
                self._run_key_request(item)
        except QKDNetworkError as e:
            self.workload_failures.append({"at": f"{item.at}", "action": item.action,
                                           "error_code": e.error_code or ""})
            log_error("workload_failed", e.message, action=item.action, at=item.at,
                      error_code=e.error_code)

    def _run_key_request(self, item: WorkloadItem) -> None:
        """Connect both apps if needed, draw keys at the initiator, fetch them at the responder, close."""
        for node_id, app_id, peer in ((item.node_a, item.initiator_app, item.responder_app),
                                      (item.node_b, item.responder_app, item.initiator_app)):
            if app_id not in self.agent(node_id).state.applications:
                self.connect_application(node_id, app_id, peer)
        session = self.open_session(item.node_a, item.initiator_app, item.node_b, item.responder_app,
                                    QoS(key_size_bits=max(item.bits, 1)))
        try:
            keys = self.get_key(item.node_a, session.session_id, item.initiator_app, item.count, item.bits)
            self.get_key_with_ids(item.node_b, session.session_id, item.responder_app,
                                  [k.key_id for k in keys])
        finally:
            self.close_session(item.node_a, session.session_id, item.initiator_app)

    def agent(self, node_id: str) -> SDNAgent:
        agent = self.agents.get(node_id)
        if agent is None:
            raise DomainError(f"Unknown node '{node_id}'", error_code="UNKNOWN_NODE")
        return agent
