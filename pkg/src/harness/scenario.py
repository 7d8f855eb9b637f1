"""Scenario documents: schema, loading and the built-in Madrid testbed."""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..config import settings
from ..linksim import PROFILE_PRESETS
from ..models.documents import decode_document, read_document
from ..models.physical import RateProfile, SchedulerConfig
from ..models.topology import (
    Capability, FiberSpec, InterfaceRole, NodeDescriptor, QkdInterface, Technology)
from ..utils.exceptions import ScenarioError
from ..utils.logging_config import log_step

RelayMode = Literal["on_demand", "pre_provisioned"]


class InterfaceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    iface_id: str
    role: InterfaceRole
    technology: Technology = Technology.CV
    device_id: Optional[str] = None


class NodeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    node_id: str
    location: str = ""
    interfaces: List[InterfaceSpec] = Field(default_factory=list)
    capabilities: List[Capability] = Field(default_factory=list)

    def to_descriptor(self) -> NodeDescriptor:
        return NodeDescriptor(
            node_id=self.node_id,
            location=self.location,
            interfaces=[QkdInterface(**i.model_dump()) for i in self.interfaces],
            capabilities=set(self.capabilities),
        )


class PhysicalLinkSpec(BaseModel):
    """A quantum link to create at setup, transmitter or receiver on either side."""
    model_config = ConfigDict(extra="forbid")

    link_id: Optional[str] = None
    node_a: str
    iface_a: str
    node_b: str
    iface_b: str
    fiber: FiberSpec
    n_classical: int = Field(default=0, ge=0)
    profile: str = Field(default="default", description="Rate profile preset name")
    rate_profile: Optional[RateProfile] = Field(None, description="Overrides the preset")
    pilot_after_channel: Optional[int] = None

    def resolved_profile(self) -> RateProfile:
        return self.rate_profile or PROFILE_PRESETS[self.profile]


class ClassicalChannelSpec(BaseModel):
    """Fiber carrying classical traffic only; no key material."""
    model_config = ConfigDict(extra="forbid")

    node_a: str
    node_b: str
    fiber: FiberSpec
    n_classical: int = Field(default=0, ge=0)


class WorkloadItem(BaseModel):
    """A timed request issued during the run."""
    model_config = ConfigDict(extra="forbid")

    at: float = Field(..., ge=0.0)
    action: Literal["create_virtual_link", "relay", "key_request", "teardown_link"]
    link_id: Optional[str] = None
    node_a: Optional[str] = None
    node_b: Optional[str] = None
    path: Optional[List[str]] = None
    min_available_bits: int = Field(default=0, ge=0)
    bits: int = Field(default=256, ge=0)
    count: int = Field(default=1, ge=0)
    initiator_app: Optional[str] = None
    responder_app: Optional[str] = None

    @model_validator(mode="after")
    def check_required(self):
        required = {
            "create_virtual_link": ("node_a", "node_b"),
            "relay": ("link_id",),
            "key_request": ("node_a", "node_b", "initiator_app", "responder_app"),
            "teardown_link": ("link_id",),
        }[self.action]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.action} needs {', '.join(missing)}")
        return self

    def referenced_nodes(self) -> List[str]:
        return [n for n in (self.node_a, self.node_b, *(self.path or [])) if n is not None]


def _default_scheduler() -> SchedulerConfig:
    return SchedulerConfig(calibration_fraction=settings.calibration_fraction,
                           slot_seconds=settings.slot_seconds)


class Scenario(BaseModel):
    """Everything that determines a run."""
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    seed: int = Field(default_factory=lambda: settings.default_seed)
    duration_s: float = Field(default=10.0, ge=0.0)
    block_size_bits: int = Field(default_factory=lambda: settings.block_size_bits, gt=0)
    scheduler: SchedulerConfig = Field(default_factory=_default_scheduler)
    low_watermark_bits: int = Field(default_factory=lambda: settings.low_watermark_bits, ge=0)
    auth_overhead_bits_per_hop: int = Field(
        default_factory=lambda: settings.auth_overhead_bits_per_hop, ge=0)
    relay_mode: RelayMode = "on_demand"
    target_buffer_bits: int = Field(default=0, ge=0)
    provision_interval_s: float = Field(default_factory=lambda: settings.provision_interval_s, gt=0)
    grid_slots: int = Field(default_factory=lambda: settings.grid_slots, gt=0)
    max_loss_db: float = Field(default_factory=lambda: settings.max_loss_db, gt=0)
    channel_penalty_db: float = Field(default_factory=lambda: settings.channel_penalty_db, ge=0)
    nodes: List[NodeSpec] = Field(default_factory=list)
    links: List[PhysicalLinkSpec] = Field(default_factory=list)
    classical_channels: List[ClassicalChannelSpec] = Field(default_factory=list)
    workload: List[WorkloadItem] = Field(default_factory=list)


def check_scenario(scenario: Scenario) -> Scenario:
    """Cross-reference checks the schema cannot express."""
    if not scenario.links:
        raise ScenarioError("no links", field_paths=["links"])
    if scenario.block_size_bits % 8:
        raise ScenarioError("block size must be a multiple of 8 bits", field_paths=["block_size_bits"])

    known = set()
    for i, node in enumerate(scenario.nodes):
        if node.node_id in known:
            raise ScenarioError(f"duplicate node '{node.node_id}'", field_paths=[f"nodes.{i}.node_id"])
        known.add(node.node_id)

    def check_ref(node_id: str, path: str):
        if node_id not in known:
            raise ScenarioError(f"unknown node '{node_id}'", field_paths=[path])

    for i, link in enumerate(scenario.links):
        check_ref(link.node_a, f"links.{i}.node_a")
        check_ref(link.node_b, f"links.{i}.node_b")
        if link.rate_profile is None and link.profile not in PROFILE_PRESETS:
            raise ScenarioError(f"unknown rate profile preset '{link.profile}'",
                                field_paths=[f"links.{i}.profile"])
    for i, channel in enumerate(scenario.classical_channels):
        check_ref(channel.node_a, f"classical_channels.{i}.node_a")
        check_ref(channel.node_b, f"classical_channels.{i}.node_b")
    for i, item in enumerate(scenario.workload):
        for node_id in item.referenced_nodes():
            check_ref(node_id, f"workload.{i}")
    return scenario


def load_scenario(document: Union[str, bytes, Dict[str, Any]]) -> Scenario:
    """Validate a scenario document; defaults come from settings."""
    try:
        scenario = decode_document(Scenario, document)
    except ValidationError as e:
        problems = [(".".join(str(p) for p in err["loc"]) or "<root>", err["msg"]) for err in e.errors()]
        raise ScenarioError(
            "scenario invalid: " + "; ".join(f"{path}: {msg}" for path, msg in problems),
            field_paths=[path for path, _ in problems])
    check_scenario(scenario)
    log_step("scenario", action="loaded", name=scenario.name, nodes=len(scenario.nodes),
             links=len(scenario.links), workload=len(scenario.workload))
    return scenario


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    try:
        document = read_document(path)
    except (OSError, ValueError) as e:
        raise ScenarioError(f"cannot read scenario file '{path}': {e}")
    return load_scenario(document)


def madrid_scenario(duration_s: float = 10.0, seed: Optional[int] = None) -> Scenario:
    """Three-PoP metro ring: one time-shared CV-QKD transmitter at Almagro, receivers at Norte and Concepcion."""
    scenario = Scenario(
        name="madrid",
        seed=settings.default_seed if seed is None else seed,
        duration_s=duration_s,
        scheduler=SchedulerConfig(calibration_fraction=0.5, slot_seconds=settings.slot_seconds),
        nodes=[
            NodeSpec(
                node_id="almagro",
                location="Almagro PoP, Madrid",
                interfaces=[
                    InterfaceSpec(iface_id="tx-norte", role=InterfaceRole.TRANSMITTER, device_id="cvqkd-tx"),
                    InterfaceSpec(iface_id="tx-concepcion", role=InterfaceRole.TRANSMITTER, device_id="cvqkd-tx"),
                ],
                capabilities=[Capability.SUPPORTS_RELAY, Capability.SUPPORTS_HYBRID,
                              Capability.SUPPORTS_TIME_SHARING],
            ),
            NodeSpec(
                node_id="norte",
                location="Norte PoP, Madrid",
                interfaces=[InterfaceSpec(iface_id="rx-almagro", role=InterfaceRole.RECEIVER)],
                capabilities=[Capability.SUPPORTS_RELAY, Capability.SUPPORTS_HYBRID],
            ),
            NodeSpec(
                node_id="concepcion",
                location="Concepcion PoP, Madrid",
                interfaces=[InterfaceSpec(iface_id="rx-almagro", role=InterfaceRole.RECEIVER)],
                capabilities=[Capability.SUPPORTS_RELAY, Capability.SUPPORTS_HYBRID],
            ),
        ],
        links=[
            # 0.78 dB of fiber plus patch panels and connectors: 6 dB
            PhysicalLinkSpec(
                link_id="almagro-norte", node_a="almagro", iface_a="tx-norte",
                node_b="norte", iface_b="rx-almagro",
                fiber=FiberSpec(length_km=3.9, component_losses_db=[5.22]),
                n_classical=17, pilot_after_channel=11),
            # 7 dB installed plant plus a 20 km spool (4 dB): 11 dB
            PhysicalLinkSpec(
                link_id="almagro-concepcion", node_a="almagro", iface_a="tx-concepcion",
                node_b="concepcion", iface_b="rx-almagro",
                fiber=FiberSpec(length_km=6.4, component_losses_db=[5.72, 4.0]),
                n_classical=17, pilot_after_channel=11),
        ],
        classical_channels=[
            ClassicalChannelSpec(node_a="norte", node_b="concepcion",
                                 fiber=FiberSpec(length_km=5.5, component_losses_db=[5.9])),
        ],
        workload=[
            WorkloadItem(at=1.0, action="create_virtual_link", link_id="vl-norte-concepcion",
                         node_a="norte", node_b="concepcion"),
            WorkloadItem(at=2.0, action="relay", link_id="vl-norte-concepcion",
                         node_a="norte", bits=256),
        ],
    )
    return check_scenario(scenario)
