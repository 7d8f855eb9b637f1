import random

import numpy as np
import pytest

from src.lkms import LocalKMS
from src.models.topology import LinkStatus
from src.relay import (
    classical_key, establish_virtual_link, hybrid_combine, provision_virtual_link, relay_key, xor_otp)
from src.relay.relay import pad_blocks_needed
from src.utils.exceptions import DomainError, LinkError, RelayDepletionError, RelayError

from .conftest import chain_topology, fill_link


def relay_chain(nodes, blocks_per_hop, seed=0):
    """Chain topology, one LKMS per node and a virtual link end to end."""
    topology, hops = chain_topology(nodes)
    kms = {n: LocalKMS(n, 256) for n in nodes}
    for i, (hop, count) in enumerate(zip(hops, blocks_per_hop)):
        fill_link([kms[nodes[i]], kms[nodes[i + 1]]], hop, count, seed=seed + i)
    vl = establish_virtual_link(topology, nodes[0], nodes[-1], list(nodes))
    return topology, hops, kms, vl


def snapshot(kms, hops, nodes):
    return {(n, h): kms[n].store.counters(h)
            for i, h in enumerate(hops) for n in (nodes[i], nodes[i + 1])}


def test_pad_blocks_needed():
    assert pad_blocks_needed(256, 0, 256) == 1
    assert pad_blocks_needed(257, 0, 256) == 2
    assert pad_blocks_needed(200, 100, 256) == 2


def test_xor_otp_rejects_length_mismatch():
    with pytest.raises(DomainError) as exc:
        xor_otp(b"ab", b"abc")
    assert exc.value.error_code == "LENGTH_MISMATCH"


def test_relay_over_two_hops():
    nodes = ["norte", "almagro", "concepcion"]
    topology, hops, kms, vl = relay_chain(nodes, [4, 4])
    result = relay_key(topology, vl, 256, kms.__getitem__, np.random.default_rng(1))
    assert result.source_key.bytes == result.destination_key.bytes
    assert result.record.per_hop_consumed_bits == {hops[0]: 256, hops[1]: 256}
    assert result.record.discarded_bits_per_hop == 0
    for i, hop in enumerate(hops):
        for node_id in (nodes[i], nodes[i + 1]):
            assert kms[node_id].store.counters(hop).consumed_bits == 256
    assert kms["norte"].relayed_keys[result.record.key_id] == result.source_key
    assert kms["concepcion"].relayed_keys[result.record.key_id].bytes == result.source_key.bytes
    assert kms["almagro"].relayed_keys == {}


def test_relay_from_far_end_walks_path_backwards():
    nodes = ["a", "b", "c"]
    topology, hops, kms, vl = relay_chain(nodes, [2, 2])
    result = relay_key(topology, vl, 128, kms.__getitem__, np.random.default_rng(0), source="c")
    assert result.record.key_id.startswith(f"{vl.link_id}@{hops[-1]}:")
    assert kms["c"].relayed_keys[result.record.key_id].bytes == kms["a"].relayed_keys[result.record.key_id].bytes


def test_auth_overhead_is_charged_per_hop():
    nodes = ["a", "b", "c"]
    topology, hops, kms, vl = relay_chain(nodes, [4, 4])
    result = relay_key(topology, vl, 200, kms.__getitem__, np.random.default_rng(0),
                       auth_overhead_bits_per_hop=100)
    assert result.record.per_hop_consumed_bits == {hops[0]: 512, hops[1]: 512}
    assert result.record.auth_overhead_bits_per_hop == 100
    assert result.record.discarded_bits_per_hop == 212
    assert len(result.source_key.bytes) == 25


def test_relay_refuses_zero_length_and_foreign_source():
    nodes = ["a", "b", "c"]
    topology, _, kms, vl = relay_chain(nodes, [2, 2])
    with pytest.raises(RelayError) as exc:
        relay_key(topology, vl, 0, kms.__getitem__, np.random.default_rng(0))
    assert exc.value.error_code == "ZERO_LENGTH_KEY"
    with pytest.raises(RelayError) as exc:
        relay_key(topology, vl, 64, kms.__getitem__, np.random.default_rng(0), source="b")
    assert exc.value.error_code == "NOT_AN_ENDPOINT"


def test_relay_with_mismatched_hops():
    nodes = ["a", "b", "c"]
    _, hops, kms, vl = relay_chain(nodes, [2, 2])
    with pytest.raises(RelayError) as exc:
        relay_key(None, vl, 64, kms.__getitem__, np.random.default_rng(0), hops=hops[:1])
    assert exc.value.error_code == "HOP_MISMATCH"
    result = relay_key(None, vl, 64, kms.__getitem__, np.random.default_rng(0), hops=hops)
    assert result.source_key.bytes == result.destination_key.bytes


@pytest.mark.parametrize("path, code", [
    (["a", "c"], "PATH_TOO_SHORT"),
    (["c", "b", "a"], "ENDPOINTS_NOT_PATH_EXTREMES"),
    (["a", "b", "a", "c"], "PATH_CYCLE"),
])
def test_establish_rejects_bad_paths(path, code):
    topology, _ = chain_topology(["a", "b", "c"])
    with pytest.raises(RelayError) as exc:
        establish_virtual_link(topology, "a", "c", path)
    assert exc.value.error_code == code


def test_establish_names_and_numbers_links():
    topology, _ = chain_topology(["a", "b", "c"])
    first = establish_virtual_link(topology, "a", "c", ["a", "b", "c"])
    second = establish_virtual_link(topology, "a", "c", ["a", "b", "c"])
    assert (first.link_id, second.link_id) == ("vl-a-c", "vl-a-c-2")
    assert first.status == LinkStatus.ACTIVE
    with pytest.raises(RelayError) as exc:
        establish_virtual_link(topology, "a", "c", ["a", "b", "c"], link_id="vl-a-c")
    assert exc.value.error_code == "DUPLICATE_LINK"


def test_establish_needs_every_hop():
    topology, _ = chain_topology(["a", "b", "c"])
    del topology.links["b-c"]
    with pytest.raises(LinkError) as exc:
        establish_virtual_link(topology, "a", "c", ["a", "b", "c"])
    assert exc.value.error_code == "BROKEN_RELAY_PATH"
    assert "vl-a-c" not in topology.links


@pytest.mark.parametrize("depleted_hop", range(4))
def test_depletion_at_any_hop_consumes_nothing(depleted_hop):
    nodes = ["a", "b", "c", "d", "e"]
    counts = [3] * 4
    counts[depleted_hop] = 1
    topology, hops, kms, vl = relay_chain(nodes, counts)
    before = snapshot(kms, hops, nodes)
    with pytest.raises(RelayDepletionError) as exc:
        relay_key(topology, vl, 512, kms.__getitem__, np.random.default_rng(0))
    assert exc.value.error_code == "RELAY_KEY_DEPLETION"
    assert exc.value.hop_index == depleted_hop
    assert exc.value.hop_link_id == hops[depleted_hop]
    assert snapshot(kms, hops, nodes) == before
    assert all(k.relayed_keys == {} for k in kms.values())


@pytest.mark.parametrize("seed", range(200))
def test_relay_on_random_chains_matches_oracle(seed):
    rng = random.Random(seed)
    nodes = [f"n{i}" for i in range(rng.randint(3, 7))]
    counts = [rng.randint(0, 6) for _ in nodes[1:]]
    topology, hops, kms, vl = relay_chain(nodes, counts, seed=seed)
    length = rng.randint(64, 1024)
    overhead = rng.choice([0, 0, 32, 128])
    needed_blocks = pad_blocks_needed(length, overhead, 256)
    before = snapshot(kms, hops, nodes)

    short = [i for i, c in enumerate(counts) if c < needed_blocks]
    if short:
        with pytest.raises(RelayDepletionError) as exc:
            relay_key(topology, vl, length, kms.__getitem__, np.random.default_rng(seed), overhead)
        assert exc.value.hop_index == short[0]
        assert snapshot(kms, hops, nodes) == before
        return

    result = relay_key(topology, vl, length, kms.__getitem__, np.random.default_rng(seed), overhead)
    assert result.destination_key.bytes == result.source_key.bytes
    assert result.source_key.size_bits == length
    for i, hop in enumerate(hops):
        for node_id in (nodes[i], nodes[i + 1]):
            after = kms[node_id].store.counters(hop)
            assert after.consumed_bits - before[(node_id, hop)].consumed_bits == needed_blocks * 256
            assert after.conserved
    for node_id in nodes[1:-1]:
        assert kms[node_id].relayed_keys == {}
        assert not kms[node_id].store.contains_bytes(result.source_key.bytes)


def test_provision_fills_both_virtual_link_stores():
    nodes = ["a", "b", "c"]
    topology, hops, kms, vl = relay_chain(nodes, [5, 5])
    for node_id in ("a", "c"):
        kms[node_id].store.open_link(vl.link_id)
    record = provision_virtual_link(topology, vl, 3, kms.__getitem__, np.random.default_rng(0))
    assert record.delivered_bits == 768
    assert record.per_hop_consumed_bits == {hops[0]: 768, hops[1]: 768}
    a_blocks = kms["a"].store.blocks(vl.link_id)
    c_blocks = kms["c"].store.blocks(vl.link_id)
    assert [b.block_id for b in a_blocks] == [0, 1, 2]
    assert [b.bytes for b in a_blocks] == [b.bytes for b in c_blocks]
    assert kms["a"].relayed_keys == {} and kms["c"].relayed_keys == {}
    assert not kms["b"].store.has_link(vl.link_id)


def test_hybrid_combine_properties():
    rng = random.Random(2024)
    for _ in range(10_000):
        n = rng.randint(1, 64)
        qkd, classical = rng.randbytes(n), rng.randbytes(n)
        combined = hybrid_combine(qkd, classical)
        assert len(combined) == n
        assert combined == hybrid_combine(classical, qkd)
        assert hybrid_combine(combined, classical) == qkd
        assert hybrid_combine(qkd, bytes(n)) == qkd
    with pytest.raises(DomainError):
        hybrid_combine(b"\x01", b"\x01\x02")


def test_classical_key_is_shared_per_key_id():
    key = classical_key(7, "s-000001", "k:0:300", 300)
    assert len(key) == 38
    assert key[-1] & 0x0F == 0
    assert key == classical_key(7, "s-000001", "k:0:300", 300)
    assert key != classical_key(8, "s-000001", "k:0:300", 300)
    assert key != classical_key(7, "s-000001", "k:1:300", 300)


# Relays carried by agent messages

@pytest.fixture
def relay_network(bare_network):
    bare_network.advance(1.0)
    vl = bare_network.create_virtual_link("norte", "concepcion")
    return bare_network, vl


def test_agents_relay_over_the_bus(relay_network):
    network, vl = relay_network
    norte, almagro, concepcion = (network.agent(n) for n in ("norte", "almagro", "concepcion"))
    before = network.bus.delivered
    consumed = almagro.kms.store.counters("almagro-norte").consumed_bits
    record = norte.relay(vl.link_id, 256)
    # reserve twice, ready, frame twice, delivered
    assert network.bus.delivered == before + 6
    assert almagro.kms.store.counters("almagro-norte").consumed_bits == consumed + 256
    assert record.per_hop_consumed_bits == {"almagro-norte": 256, "almagro-concepcion": 256}
    source_key = norte.kms.relayed_keys[record.key_id]
    assert concepcion.kms.relayed_keys[record.key_id].bytes == source_key.bytes
    assert almagro.kms.relayed_keys == {}
    assert not almagro.kms.store.contains_bytes(source_key.bytes)
    assert all(a.state.relay_holds == {} for a in (norte, almagro, concepcion))
    assert norte.relays == {} and norte.relay_outcomes == {}


def test_provision_over_the_bus_fills_both_stores(relay_network):
    network, vl = relay_network
    norte, concepcion = network.agent("norte"), network.agent("concepcion")
    record = norte.provision(vl.link_id, 3)
    assert record.delivered_bits == 768
    norte_blocks = norte.kms.store.blocks(vl.link_id)
    assert [b.block_id for b in norte_blocks] == [0, 1, 2]
    assert [b.bytes for b in norte_blocks] == [b.bytes for b in concepcion.kms.store.blocks(vl.link_id)]


def test_reservation_abort_releases_every_hop(relay_network):
    network, vl = relay_network
    norte, almagro = network.agent("norte"), network.agent("almagro")
    store = almagro.kms.store
    store.take("almagro-concepcion", store.allocatable_bits("almagro-concepcion") // 256)
    allocatable = {n: network.agent(n).kms.store.allocatable_bits("almagro-norte") for n in ("norte", "almagro")}
    with pytest.raises(RelayDepletionError) as exc:
        norte.relay(vl.link_id, 256)
    assert exc.value.error_code == "RELAY_KEY_DEPLETION"
    assert exc.value.details == {"hop_link_id": "almagro-concepcion", "hop_index": 1, "available_bits": 0}
    for node_id in ("norte", "almagro"):
        counters = network.agent(node_id).kms.store.counters("almagro-norte")
        assert counters.reserved_bits == 0 and counters.conserved
        # released pads stay below the allocation mark
        assert network.agent(node_id).kms.store.allocatable_bits("almagro-norte") == allocatable[node_id] - 256
        assert network.agent(node_id).state.relay_holds == {}
    assert norte.relays == {} and norte.relay_outcomes == {}
    assert norte.relay_records == []


def test_open_relay_directive_is_acked_after_delivery(relay_network):
    network, vl = relay_network
    record = network.request_relay(vl.link_id, 256)
    [ack] = [e for e in network.event_log.of_kind("ack") if e.data["node"] == "norte"][-1:]
    peers = [e.data["peer"] for e in network.event_log.of_kind("peer") if e.seq < ack.seq]
    assert peers[-1] == "relay_delivered"
    assert ack.data["ok"] is True
    assert network.controller.relay_records == [record]
