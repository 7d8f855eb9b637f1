import random

import pytest

from src.lkms import LocalKMS
from src.lkms.service import assemble_key, key_id_for
from src.models.keys import KeySession
from src.utils.exceptions import (
    DesynchronizedLinkError, DomainError, KeyDeliveryError, KeyDepletionError, LinkError)

from .conftest import fill_link, make_blocks


def open_pair(kms, session_id="s1", initiator=("a", "alice"), responder=("b", "bob"), link_id="a-b"):
    session = KeySession(session_id=session_id, initiator_node=initiator[0], initiator_app=initiator[1],
                         responder_node=responder[0], responder_app=responder[1], serving_link=link_id)
    for node_id in (initiator[0], responder[0]):
        kms[node_id].open_session(session)
    return session


def draw(kms, session, count, size_bits):
    """get_key at the initiator with the reservation delivered to the responder."""
    initiator = kms[session.initiator_node]
    keys, reservations = initiator.get_key(session.session_id, session.initiator_app, count, size_bits)
    kms[session.responder_node].reserve_for_peer(session.session_id, reservations)
    return keys


def test_assemble_key_masks_trailing_bits():
    blocks = make_blocks("l", 2)
    key = assemble_key(blocks, 300)
    assert len(key) == 38
    assert key[:37] == (blocks[0].bytes + blocks[1].bytes)[:37]
    assert key[-1] & 0x0F == 0


def test_get_key_spans_two_blocks(kms_pair):
    session = open_pair(kms_pair)
    [key] = draw(kms_pair, session, 1, 300)
    assert key.key_id == key_id_for("a-b", 0, 300) == "a-b:0:300"
    assert key.size_bits == 300
    assert kms_pair["a"].store.counters("a-b").consumed_bits == 512
    assert kms_pair["b"].store.counters("a-b").reserved_bits == 512

    [fetched] = kms_pair["b"].get_key_with_ids("s1", "bob", [key.key_id])
    assert fetched.bytes == key.bytes
    counters = kms_pair["b"].store.counters("a-b")
    assert counters.reserved_bits == 0 and counters.consumed_bits == 512
    assert kms_pair["a"].usage["alice"].keys_delivered == 1
    assert kms_pair["b"].usage["bob"].bits_consumed == 512


def test_keys_are_distinct_and_sequential(kms_pair):
    session = open_pair(kms_pair)
    keys = draw(kms_pair, session, 4, 256)
    assert [k.key_id for k in keys] == [f"a-b:{i}:256" for i in range(4)]
    assert len({k.bytes for k in keys}) == 4


def test_zero_count_is_empty(kms_pair):
    open_pair(kms_pair)
    assert kms_pair["a"].get_key("s1", "alice", 0, 256) == ([], [])


def test_non_positive_size_refused(kms_pair):
    open_pair(kms_pair)
    with pytest.raises(DomainError) as exc:
        kms_pair["a"].get_key("s1", "alice", 1, 0)
    assert exc.value.error_code == "INVALID_KEY_REQUEST"


def test_depletion_consumes_nothing(kms_pair):
    open_pair(kms_pair)
    before = kms_pair["a"].store.counters("a-b")
    with pytest.raises(KeyDepletionError) as exc:
        kms_pair["a"].get_key("s1", "alice", 17, 256)
    assert exc.value.error_code == "KEY_DEPLETION"
    assert exc.value.available_bits == 16 * 256
    assert kms_pair["a"].store.counters("a-b") == before


def test_roles_are_enforced(kms_pair):
    open_pair(kms_pair)
    with pytest.raises(KeyDeliveryError) as exc:
        kms_pair["b"].get_key("s1", "bob", 1, 256)
    assert exc.value.error_code == "ROLE_VIOLATION"
    with pytest.raises(KeyDeliveryError) as exc:
        kms_pair["a"].get_key_with_ids("s1", "alice", ["a-b:0:256"])
    assert exc.value.error_code == "ROLE_VIOLATION"


def test_replayed_fetch_refused(kms_pair):
    session = open_pair(kms_pair)
    [key] = draw(kms_pair, session, 1, 256)
    kms_pair["b"].get_key_with_ids("s1", "bob", [key.key_id])
    with pytest.raises(KeyDeliveryError) as exc:
        kms_pair["b"].get_key_with_ids("s1", "bob", [key.key_id])
    assert exc.value.error_code == "KEY_REPLAY_REFUSED"


def test_duplicate_ids_in_one_fetch_refused(kms_pair):
    session = open_pair(kms_pair)
    [key] = draw(kms_pair, session, 1, 256)
    with pytest.raises(KeyDeliveryError) as exc:
        kms_pair["b"].get_key_with_ids("s1", "bob", [key.key_id, key.key_id])
    assert exc.value.error_code == "KEY_REPLAY_REFUSED"
    assert kms_pair["b"].store.counters("a-b").reserved_bits == 256


def test_unknown_key_id_refused(kms_pair):
    session = open_pair(kms_pair)
    draw(kms_pair, session, 1, 256)
    with pytest.raises(KeyDeliveryError) as exc:
        kms_pair["b"].get_key_with_ids("s1", "bob", ["a-b:9:256"])
    assert exc.value.error_code == "UNKNOWN_KEY_ID"


def test_session_errors(kms_pair):
    open_pair(kms_pair)
    with pytest.raises(KeyDeliveryError) as exc:
        open_pair(kms_pair)
    assert exc.value.error_code == "DUPLICATE_SESSION"
    with pytest.raises(KeyDeliveryError) as exc:
        kms_pair["a"].get_key("nope", "alice", 1, 256)
    assert exc.value.error_code == "UNKNOWN_SESSION"
    with pytest.raises(KeyDeliveryError) as exc:
        open_pair(kms_pair, session_id="s2", link_id="a-c")
    assert exc.value.error_code == "NO_KEY_ASSOCIATION"


def test_closed_session_refuses_requests(kms_pair):
    open_pair(kms_pair)
    kms_pair["a"].close_session("s1")
    with pytest.raises(KeyDeliveryError) as exc:
        kms_pair["a"].get_key("s1", "alice", 1, 256)
    assert exc.value.error_code == "SESSION_CLOSED"


def test_close_releases_unfetched_reservations(kms_pair):
    session = open_pair(kms_pair)
    keys = draw(kms_pair, session, 2, 256)
    kms_pair["b"].get_key_with_ids("s1", "bob", [keys[0].key_id])
    assert kms_pair["a"].close_session("s1") == 0
    assert kms_pair["b"].close_session("s1") == 256
    counters = kms_pair["b"].store.counters("a-b")
    assert counters.reserved_bits == 0
    assert counters.available_bits == 15 * 256
    assert counters.conserved


def test_released_blocks_are_not_allocated_again(kms_pair):
    session = open_pair(kms_pair)
    draw(kms_pair, session, 1, 256)
    kms_pair["b"].close_session("s1")
    kms_pair["a"].close_session("s1")
    assert kms_pair["b"].available_bits("a-b") == 16 * 256
    assert kms_pair["a"].store.allocatable_bits("a-b") == kms_pair["b"].store.allocatable_bits("a-b") == 15 * 256

    session = open_pair(kms_pair, session_id="s2")
    [key] = draw(kms_pair, session, 1, 256)
    assert key.key_id == "a-b:1:256"


def test_ingest_rejects_gaps_and_foreign_blocks():
    kms = LocalKMS("a", 256)
    kms.store.open_link("a-b")
    kms.ingest_blocks("a-b", make_blocks("a-b", 2))
    with pytest.raises(DesynchronizedLinkError):
        kms.ingest_blocks("a-b", make_blocks("a-b", 1, start=3))
    with pytest.raises(DesynchronizedLinkError):
        kms.ingest_blocks("a-b", make_blocks("x-y", 1, start=2))
    with pytest.raises(DesynchronizedLinkError):
        kms.ingest_blocks("a-b", make_blocks("a-b", 1, start=2, size_bits=128))
    assert kms.store.counters("a-b").generated_bits == 512


def test_unknown_link_at_store():
    with pytest.raises(LinkError) as exc:
        LocalKMS("a").available_bits("nowhere")
    assert exc.value.error_code == "UNKNOWN_LINK"


def test_abandoned_sessions_close_with_their_link(kms_pair):
    open_pair(kms_pair)
    open_pair(kms_pair, session_id="s2")
    assert kms_pair["b"].abandon_link_sessions("a-b") == ["s1", "s2"]
    with pytest.raises(KeyDeliveryError) as exc:
        kms_pair["b"].get_key_with_ids("s1", "bob", [])
    assert exc.value.error_code == "SESSION_CLOSED"


@pytest.mark.parametrize("seed", range(25))
def test_conservation_under_interleaved_sessions(seed):
    rng = random.Random(seed)
    kms = {"a": LocalKMS("a", 256), "b": LocalKMS("b", 256)}
    fill_link([kms["a"], kms["b"]], "a-b", 64, seed=seed)
    sessions = [
        open_pair(kms, "s1", ("a", "alice"), ("b", "bob")),
        open_pair(kms, "s2", ("a", "erin"), ("b", "frank")),
        open_pair(kms, "s3", ("b", "carol"), ("a", "dave")),
    ]
    outstanding = {s.session_id: [] for s in sessions}
    delivered = []
    open_ids = {s.session_id for s in sessions}

    for _ in range(60):
        session = rng.choice(sessions)
        sid = session.session_id
        if sid not in open_ids:
            continue
        op = rng.random()
        if op < 0.6:
            try:
                keys = draw(kms, session, rng.randint(0, 3), rng.randint(1, 700))
            except KeyDepletionError:
                keys = []
            outstanding[sid].extend(keys)
            delivered.extend(k.key_id for k in keys)
        elif op < 0.9 and outstanding[sid]:
            wanted = rng.sample(outstanding[sid], rng.randint(1, len(outstanding[sid])))
            fetched = kms[session.responder_node].get_key_with_ids(
                sid, session.responder_app, [k.key_id for k in wanted])
            assert [k.bytes for k in fetched] == [k.bytes for k in wanted]
            outstanding[sid] = [k for k in outstanding[sid] if k not in wanted]
        elif op >= 0.9:
            kms[session.initiator_node].close_session(sid)
            kms[session.responder_node].close_session(sid)
            open_ids.discard(sid)

        for node in kms.values():
            counters = node.store.counters("a-b")
            assert counters.conserved
            assert counters.generated_bits == 64 * 256
        assert kms["a"].store.allocatable_bits("a-b") == kms["b"].store.allocatable_bits("a-b")

    assert len(delivered) == len(set(delivered))
