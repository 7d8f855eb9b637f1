"""End-to-end checks against the Madrid testbed figures and the relay/path oracles."""

import random
import time

import numpy as np
import pytest

from src.controlplane import assign_spectrum, compute_path, spectrum_collisions
from src.harness import QKDNetwork, WorkloadItem, madrid_scenario, run
from src.linksim import key_rate
from src.lkms import LocalKMS
from src.models.physical import SlotKind
from src.models.validation import underlying_physical_links
from src.relay import establish_virtual_link, relay_key
from src.relay.relay import pad_blocks_needed
from src.utils.exceptions import RelayDepletionError

from .conftest import fill_link, random_graph

pytestmark = pytest.mark.acceptance


def test_madrid_rates_hit_field_anchors():
    started = time.perf_counter()
    assert key_rate(6.0) == pytest.approx(70_000, rel=1e-6)
    assert key_rate(11.0) == pytest.approx(20_000, rel=1e-6)
    network = QKDNetwork.from_scenario(madrid_scenario())
    expected = network.controller.expected_rates
    assert expected["almagro-norte"] == pytest.approx(70_000, rel=1e-6)
    assert expected["almagro-concepcion"] == pytest.approx(20_000, rel=1e-6)
    assert time.perf_counter() - started < 1.0


def test_shared_transmitter_matches_dedicated_baseline():
    started = time.perf_counter()
    report = run(madrid_scenario())
    for link_id in ("almagro-norte", "almagro-concepcion"):
        link = report.links[link_id]
        baseline = (1 - 0.5) * link.expected_rate_bps * 10.0
        assert link.generated_bits == pytest.approx(baseline, rel=0.01)
    assert time.perf_counter() - started < 5.0


def test_multi_hop_key_is_bit_identical_at_both_ends():
    network = QKDNetwork.from_scenario(madrid_scenario())
    network.advance(10.0)
    [record] = network.relay_records()
    assert record.per_hop_consumed_bits == {"almagro-norte": 256, "almagro-concepcion": 256}
    assert record.auth_overhead_bits_per_hop == 0
    source = network.agents["norte"].kms.relayed_keys[record.key_id]
    destination = network.agents["concepcion"].kms.relayed_keys[record.key_id]
    assert destination.bytes == source.bytes
    assert source.size_bits == 256
    almagro = network.agents["almagro"].kms
    assert almagro.relayed_keys == {}
    assert not almagro.store.contains_bytes(source.bytes)


@pytest.mark.parametrize("seed", range(200))
def test_relay_over_random_topologies(seed):
    rng = random.Random(seed)
    topology = random_graph(rng)
    src, dst = rng.sample(sorted(topology.nodes), 2)
    path = compute_path(topology, src, dst)
    if path is None or len(path) < 3:
        return
    vl = establish_virtual_link(topology, src, dst, path)
    hops = underlying_physical_links(topology, vl)
    kms = {n: LocalKMS(n, 256) for n in topology.nodes}
    counts = [rng.randint(0, 5) for _ in hops]
    for i, (hop, count) in enumerate(zip(hops, counts)):
        fill_link([kms[path[i]], kms[path[i + 1]]], hop, count, seed=seed * 10 + i)
    length = rng.randint(1, 1024)
    needed = pad_blocks_needed(length, 0, 256)

    short = [i for i, c in enumerate(counts) if c < needed]
    if short:
        with pytest.raises(RelayDepletionError) as exc:
            relay_key(topology, vl, length, kms.__getitem__, np.random.default_rng(seed))
        assert exc.value.hop_index == short[0]
        assert all(kms[n].store.counters(h).consumed_bits == 0
                   for i, h in enumerate(hops) for n in (path[i], path[i + 1]))
        return

    result = relay_key(topology, vl, length, kms.__getitem__, np.random.default_rng(seed))
    assert result.destination_key.bytes == result.source_key.bytes
    assert kms[dst].relayed_keys[result.record.key_id].bytes == result.source_key.bytes
    for node_id in path[1:-1]:
        assert not kms[node_id].store.contains_bytes(result.source_key.bytes)


def test_madrid_relay_path():
    network = QKDNetwork.from_scenario(madrid_scenario())
    assert compute_path(network.controller.topology, "norte", "concepcion") == [
        "norte", "almagro", "concepcion"]


def test_testbed_spectrum_layout():
    spectrum = assign_spectrum(17, pilot_after_channel=11)
    assert set(spectrum_collisions(spectrum).values()) == {0}
    assert len(spectrum.slots_of(SlotKind.CLASSICAL)) == 17
    assert len(spectrum.slots_of(SlotKind.QUANTUM)) == 1
    [pilot] = spectrum.slots_of(SlotKind.PILOT)
    assert spectrum.slot_of_channel(11) < pilot < spectrum.slot_of_channel(12)


@pytest.mark.parametrize("seed", [0, 7])
def test_equal_seeds_give_identical_reports(seed):
    scenario = madrid_scenario(duration_s=4.0, seed=seed)
    scenario.workload.append(WorkloadItem(at=3.0, action="key_request", node_a="norte",
                                          node_b="concepcion", initiator_app="alice",
                                          responder_app="bob", count=2, bits=128))
    first = run(scenario).model_dump_json()
    second = run(scenario).model_dump_json()
    assert first == second
