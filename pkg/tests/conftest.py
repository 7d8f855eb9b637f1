"""Shared fixtures: the Madrid testbed and random topology builders."""

import os
import random
from typing import Dict, List, Optional, Tuple

os.environ.setdefault("LOG_TO_FILE", "false")
os.environ.setdefault("LOG_LEVEL", "WARNING")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from src.controlplane import MessageBus, NotificationBus, SDNController  # noqa: E402
from src.harness import QKDNetwork, Scenario, madrid_scenario  # noqa: E402
from src.lkms import LocalKMS  # noqa: E402
from src.models.physical import KeyBlock  # noqa: E402
from src.models.topology import (  # noqa: E402
    FiberSpec, InterfaceRole, Link, LinkKind, LinkStatus, NodeDescriptor, QkdInterface, Topology)


def make_node(node_id: str, interfaces: List[Tuple[str, InterfaceRole]] = (), **kwargs) -> NodeDescriptor:
    return NodeDescriptor(
        node_id=node_id,
        interfaces=[QkdInterface(iface_id=iface_id, role=role) for iface_id, role in interfaces],
        **kwargs,
    )


def make_blocks(link_id: str, n: int, start: int = 0, size_bits: int = 256, seed: int = 0) -> List[KeyBlock]:
    """Deterministic random blocks, identical for equal arguments."""
    rng = np.random.default_rng(seed * 1_000_003 + start)
    return [KeyBlock(block_id=start + i, link_id=link_id, bytes=rng.bytes(size_bits // 8))
            for i in range(n)]


def fill_link(kms_list: List[LocalKMS], link_id: str, n: int, seed: int = 0) -> None:
    """Give every LKMS the same n fresh blocks on a link."""
    for kms in kms_list:
        if not kms.store.has_link(link_id):
            kms.store.open_link(link_id)
    start = kms_list[0].store.next_block_id(link_id)
    blocks = make_blocks(link_id, n, start=start, seed=seed)
    for kms in kms_list:
        kms.ingest_blocks(link_id, blocks)


def chain_topology(nodes: List[str], rate_loss_db: Optional[List[float]] = None) -> Tuple[Topology, List[str]]:
    """Active physical links along a chain of nodes; returns the topology and link ids in order."""
    topology = Topology()
    for node_id in nodes:
        topology.nodes[node_id] = make_node(node_id)
    link_ids = []
    for i, (a, b) in enumerate(zip(nodes, nodes[1:])):
        loss = rate_loss_db[i] if rate_loss_db else 6.0
        link = physical_link(f"{a}-{b}", a, b, loss)
        topology.links[link.link_id] = link
        link_ids.append(link.link_id)
    return topology, link_ids


def physical_link(link_id: str, a: str, b: str, loss_db: float = 6.0,
                  status: LinkStatus = LinkStatus.ACTIVE) -> Link:
    from src.linksim import DEFAULT_RATE_PROFILE
    return Link(link_id=link_id, kind=LinkKind.PHYSICAL, endpoints=(a, b),
                fiber=FiberSpec(length_km=0.0, component_losses_db=[loss_db]),
                rate_profile=DEFAULT_RATE_PROFILE, status=status)


def random_graph(rng: random.Random, max_nodes: int = 8, max_loss_db: float = 30.0) -> Topology:
    """Random physical topology: up to max_nodes nodes, random edges and losses."""
    n = rng.randint(2, max_nodes)
    names = [f"n{i}" for i in range(n)]
    topology = Topology(nodes={name: make_node(name) for name in names})
    edge_p = rng.uniform(0.2, 0.7)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_p:
                link_id = f"{names[i]}-{names[j]}"
                topology.links[link_id] = physical_link(
                    link_id, names[i], names[j], round(rng.uniform(0.0, max_loss_db), 2))
    return topology


@pytest.fixture
def madrid() -> Scenario:
    return madrid_scenario()


@pytest.fixture
def madrid_network(madrid) -> QKDNetwork:
    """Madrid set up at t=0 with its workload queued."""
    return QKDNetwork.from_scenario(madrid)


@pytest.fixture
def bare_network(madrid) -> QKDNetwork:
    """Madrid nodes and physical links only, no workload."""
    return QKDNetwork.from_scenario(madrid.model_copy(update={"workload": []}))


@pytest.fixture
def control_plane() -> Tuple[MessageBus, NotificationBus, SDNController]:
    bus = MessageBus()
    notifications = NotificationBus(bus)
    return bus, notifications, SDNController(bus, notifications)


@pytest.fixture
def kms_pair() -> Dict[str, LocalKMS]:
    """Two LKMS instances sharing link 'a-b' with 16 blocks."""
    kms = {"a": LocalKMS("a", 256), "b": LocalKMS("b", 256)}
    fill_link([kms["a"], kms["b"]], "a-b", 16)
    return kms
