import json

import pytest
from pydantic import ValidationError

from src.models.documents import decode_document, encode_document
from src.models.keys import StoreCounters
from src.models.topology import (
    Capability, FiberSpec, InterfaceRole, Link, LinkKind, LinkStatus, Topology)
from src.models.validation import underlying_physical_links, validate_topology
from src.utils.exceptions import LinkError

from .conftest import chain_topology, make_node, physical_link


def codes(topology: Topology):
    return sorted({v.code for v in validate_topology(topology)})


def test_fiber_rejects_negative_component_loss():
    with pytest.raises(ValidationError):
        FiberSpec(length_km=1.0, component_losses_db=[1.0, -0.5])


def test_fiber_rejects_unknown_field():
    with pytest.raises(ValidationError):
        FiberSpec(length_km=1.0, attenuation=0.3)


def test_empty_topology_is_valid():
    assert validate_topology(Topology()) == []


def test_chain_topology_is_valid():
    topology, _ = chain_topology(["a", "b", "c"])
    assert validate_topology(topology) == []


def test_self_link_and_unknown_endpoint_flagged():
    topology = Topology(nodes={"a": make_node("a")})
    topology.links["a-a"] = physical_link("a-a", "a", "a")
    topology.links["a-z"] = physical_link("a-z", "a", "z")
    assert codes(topology) == ["self_link", "unknown_endpoint"]


def test_role_mismatch_flagged():
    topology = Topology(nodes={
        "a": make_node("a", [("tx", InterfaceRole.TRANSMITTER)]),
        "b": make_node("b", [("tx", InterfaceRole.TRANSMITTER)]),
    })
    link = physical_link("a-b", "a", "b").model_copy(update={"interfaces": ("tx", "tx")})
    topology.links["a-b"] = link
    assert "role_mismatch" in codes(topology)


def test_interface_attached_twice_flagged():
    topology = Topology(nodes={
        "a": make_node("a", [("tx", InterfaceRole.TRANSMITTER)]),
        "b": make_node("b", [("rx", InterfaceRole.RECEIVER)]),
        "c": make_node("c", [("rx", InterfaceRole.RECEIVER)]),
    })
    topology.links["a-b"] = physical_link("a-b", "a", "b").model_copy(update={"interfaces": ("tx", "rx")})
    topology.links["a-c"] = physical_link("a-c", "a", "c").model_copy(update={"interfaces": ("tx", "rx")})
    assert codes(topology) == ["interface_multi_attached"]


def test_down_link_releases_its_interfaces():
    topology = Topology(nodes={
        "a": make_node("a", [("tx", InterfaceRole.TRANSMITTER)]),
        "b": make_node("b", [("rx", InterfaceRole.RECEIVER)]),
    })
    old = physical_link("a-b", "a", "b", status=LinkStatus.DOWN)
    topology.links["a-b"] = old.model_copy(update={"interfaces": ("tx", "rx")})
    topology.links["a-b-2"] = physical_link("a-b-2", "a", "b").model_copy(update={"interfaces": ("tx", "rx")})
    assert validate_topology(topology) == []


def test_virtual_link_path_checks():
    topology, _ = chain_topology(["a", "b", "c"])
    topology.links["short"] = Link(link_id="short", kind=LinkKind.VIRTUAL, endpoints=("a", "c"),
                                   path=["a", "c"])
    topology.links["wrong-end"] = Link(link_id="wrong-end", kind=LinkKind.VIRTUAL, endpoints=("a", "c"),
                                       path=["c", "b", "a"])
    assert codes(topology) == ["path_endpoint_mismatch", "path_too_short"]


def test_broken_relay_path_flagged():
    topology, _ = chain_topology(["a", "b", "c"])
    topology.nodes["d"] = make_node("d")
    topology.links["vl"] = Link(link_id="vl", kind=LinkKind.VIRTUAL, endpoints=("a", "d"),
                                path=["a", "b", "d"], status=LinkStatus.ACTIVE)
    assert codes(topology) == ["broken_relay_path"]


def test_underlying_physical_links_in_path_order():
    topology, link_ids = chain_topology(["a", "b", "c", "d"])
    vl = Link(link_id="vl", kind=LinkKind.VIRTUAL, endpoints=("a", "d"), path=["a", "b", "c", "d"])
    assert underlying_physical_links(topology, vl) == link_ids


def test_underlying_physical_links_broken_hop():
    topology, _ = chain_topology(["a", "b", "c"])
    topology.links["b-c"] = topology.links["b-c"].model_copy(update={"status": LinkStatus.DOWN})
    vl = Link(link_id="vl", kind=LinkKind.VIRTUAL, endpoints=("a", "c"), path=["a", "b", "c"])
    with pytest.raises(LinkError) as exc:
        underlying_physical_links(topology, vl)
    assert exc.value.error_code == "BROKEN_RELAY_PATH"


def test_underlying_physical_links_picks_lowest_parallel_id():
    topology, _ = chain_topology(["a", "b", "c"])
    topology.links["a-b-0"] = physical_link("a-b-0", "a", "b", 20.0)
    vl = Link(link_id="vl", kind=LinkKind.VIRTUAL, endpoints=("a", "c"), path=["a", "b", "c"])
    assert underlying_physical_links(topology, vl) == ["a-b", "b-c"]


def test_store_counters_conservation():
    assert StoreCounters(generated_bits=512, available_bits=256, reserved_bits=0,
                         consumed_bits=256).conserved
    assert not StoreCounters(generated_bits=512, available_bits=512, consumed_bits=256).conserved


def test_node_document_round_trip_keeps_capabilities():
    node = make_node("almagro", [("tx", InterfaceRole.TRANSMITTER)],
                     capabilities={Capability.SUPPORTS_RELAY, Capability.SUPPORTS_HYBRID})
    document = encode_document(node)
    assert json.loads(document)["capabilities"] == sorted(
        [Capability.SUPPORTS_HYBRID.value, Capability.SUPPORTS_RELAY.value])
    assert decode_document(type(node), document) == node
