import pytest

from src.agent import DirectiveMemo, SDNAgent
from src.controlplane import CONTROLLER_ADDRESS, MessageBus, NotificationBus, agent_address
from src.models.control import (
    Directive, DirectiveAck, DirectiveKind, Notification, NotificationKind, PeerMessage)
from src.models.keys import KeySession, QoS
from src.models.physical import BlockState
from src.models.topology import InterfaceRole, InterfaceStatus, Link, LinkKind, LinkStatus
from src.utils.exceptions import ApplicationError, KeyDeliveryError

from .conftest import make_blocks, make_node, physical_link


@pytest.fixture
def wired():
    """Agent 'b' on a bus whose controller end records everything it receives."""
    bus = MessageBus()
    notifications = NotificationBus(bus)
    inbox = []
    bus.attach(CONTROLLER_ADDRESS, inbox.append)
    notifications.subscribe(CONTROLLER_ADDRESS, "qkd.#")
    agent = SDNAgent(make_node("b", [("rx", InterfaceRole.RECEIVER), ("rx2", InterfaceRole.RECEIVER)]),
                     bus, notifications, block_size_bits=256, low_watermark_bits=512)
    return bus, agent, inbox


def link_doc(link_id="a-b", iface_b="rx"):
    link = physical_link(link_id, "a", "b", status=LinkStatus.PLANNED)
    return link.model_copy(update={"interfaces": ("tx", iface_b)}).model_dump(mode="json")


def directive(directive_id, kind, payload, target="b"):
    return Directive(directive_id=directive_id, target_node=target, kind=kind, payload=payload)


def configure(agent, link_id="a-b", iface="rx", base=0):
    create = agent.apply_directive(directive(f"d-{base + 1}", DirectiveKind.CREATE_LINK_ENDPOINT,
                                             {"link": link_doc(link_id, iface), "iface_id": iface}))
    activate = agent.apply_directive(directive(f"d-{base + 2}", DirectiveKind.ACTIVATE_LINK,
                                               {"link_id": link_id}))
    return create, activate


def test_create_and_activate_physical_endpoint(wired):
    bus, agent, inbox = wired
    create, activate = configure(agent)
    assert create.ok and activate.ok
    assert agent.kms.store.has_link("a-b")
    iface = agent.state.node.get_interface("rx")
    assert iface.attached_link == "a-b"
    assert iface.status == InterfaceStatus.GENERATING
    assert agent.state.link_endpoints["a-b"].link.status == LinkStatus.ACTIVE
    bus.pump()
    [notice] = [m for m in inbox if isinstance(m, Notification)]
    assert notice.kind == NotificationKind.LINK_STATUS
    assert notice.payload == {"link_id": "a-b", "status": "active"}
    assert notice.seq == 1


def test_directives_over_the_bus_are_acked_in_order(wired):
    bus, agent, inbox = wired
    bus.send(agent_address("b"), directive("d-1", DirectiveKind.CREATE_LINK_ENDPOINT,
                                           {"link": link_doc(), "iface_id": "rx"}))
    bus.send(agent_address("b"), directive("d-2", DirectiveKind.ACTIVATE_LINK, {"link_id": "a-b"}))
    bus.pump()
    acks = [m for m in inbox if isinstance(m, DirectiveAck)]
    assert [(a.directive_id, a.ok) for a in acks] == [("d-1", True), ("d-2", True)]
    assert agent.state.pending_directives == []


def test_replayed_directive_is_not_executed_twice(wired):
    _, agent, _ = wired
    first = agent.apply_directive(directive("d-1", DirectiveKind.CREATE_LINK_ENDPOINT,
                                            {"link": link_doc(), "iface_id": "rx"}))
    again = agent.apply_directive(directive("d-1", DirectiveKind.CREATE_LINK_ENDPOINT,
                                            {"link": link_doc(), "iface_id": "rx"}))
    assert first.ok and again == first
    assert agent.directives_executed == 1


def test_directive_for_another_node(wired):
    _, agent, _ = wired
    ack = agent.apply_directive(directive("d-1", DirectiveKind.TEARDOWN, {"link_id": "a-b"}, target="c"))
    assert not ack.ok
    assert ack.error_code == "WRONG_TARGET"
    assert agent.directives_executed == 0


def test_malformed_payload(wired):
    _, agent, _ = wired
    ack = agent.apply_directive(directive("d-1", DirectiveKind.CREATE_LINK_ENDPOINT, {"iface_id": "rx"}))
    assert ack.error_code == "MALFORMED_PAYLOAD"
    ack = agent.apply_directive(directive("d-2", DirectiveKind.CREATE_LINK_ENDPOINT,
                                          {"link": {"link_id": "x"}, "iface_id": "rx"}))
    assert ack.error_code == "MALFORMED_PAYLOAD"


def test_endpoint_configuration_errors(wired):
    _, agent, _ = wired
    configure(agent)
    busy = agent.apply_directive(directive("d-3", DirectiveKind.CREATE_LINK_ENDPOINT,
                                           {"link": link_doc("a-b-2", "rx"), "iface_id": "rx"}))
    assert busy.error_code == "INTERFACE_CONFLICT"
    again = agent.apply_directive(directive("d-4", DirectiveKind.CREATE_LINK_ENDPOINT,
                                            {"link": link_doc("a-b", "rx2"), "iface_id": "rx2"}))
    assert again.error_code == "LINK_EXISTS"
    foreign = physical_link("c-d", "c", "d").model_dump(mode="json")
    not_mine = agent.apply_directive(directive("d-5", DirectiveKind.CREATE_LINK_ENDPOINT,
                                               {"link": foreign, "iface_id": "rx2"}))
    assert not_mine.error_code == "NOT_AN_ENDPOINT"
    unknown = agent.apply_directive(directive("d-6", DirectiveKind.CREATE_LINK_ENDPOINT,
                                              {"link": link_doc("a-b-3", "rx9"), "iface_id": "rx9"}))
    assert unknown.error_code == "UNKNOWN_INTERFACE"


def test_activate_unknown_link(wired):
    _, agent, _ = wired
    ack = agent.apply_directive(directive("d-1", DirectiveKind.ACTIVATE_LINK, {"link_id": "nope"}))
    assert ack.error_code == "UNKNOWN_LINK"


def test_teardown_frees_interface_and_store(wired):
    bus, agent, inbox = wired
    configure(agent)
    agent.ingest_blocks("a-b", make_blocks("a-b", 2))
    ack = agent.apply_directive(directive("d-3", DirectiveKind.TEARDOWN, {"link_id": "a-b"}))
    assert ack.result["removed"] is True
    assert ack.result["final_counters"]["generated_bits"] == 512
    assert not agent.kms.store.has_link("a-b")
    iface = agent.state.node.get_interface("rx")
    assert (iface.attached_link, iface.status) == (None, InterfaceStatus.IDLE)
    again = agent.apply_directive(directive("d-4", DirectiveKind.TEARDOWN, {"link_id": "a-b"}))
    assert again.ok and again.result["removed"] is False
    bus.pump()
    statuses = [m.payload["status"] for m in inbox if isinstance(m, Notification)]
    assert statuses == ["active", "down"]


def test_set_profile_needs_physical_link(wired):
    _, agent, _ = wired
    vl = Link(link_id="vl-b-d", kind=LinkKind.VIRTUAL, endpoints=("b", "d"), path=["b", "c", "d"])
    agent.apply_directive(directive("d-1", DirectiveKind.CREATE_LINK_ENDPOINT,
                                    {"link": vl.model_dump(mode="json"), "hops": ["b-c", "c-d"]}))
    assert agent.state.link_endpoints["vl-b-d"].hops == ["b-c", "c-d"]
    ack = agent.apply_directive(directive("d-2", DirectiveKind.SET_PROFILE, {
        "link_id": "vl-b-d", "rate_profile": {"r0_bps": 1000.0, "slope_per_db": 0.1}}))
    assert ack.error_code == "WRONG_LINK_KIND"


def test_relay_needs_active_virtual_link(wired):
    _, agent, _ = wired
    configure(agent)
    ack = agent.apply_directive(directive("d-3", DirectiveKind.OPEN_RELAY,
                                          {"virtual_link_id": "a-b", "length_bits": 256}))
    assert ack.error_code == "WRONG_LINK_KIND"


def test_low_watermark_fires_once_per_crossing(wired):
    bus, agent, inbox = wired
    configure(agent)
    agent.ingest_blocks("a-b", make_blocks("a-b", 3))
    assert agent.check_watermarks() == []
    agent.kms.store.take("a-b", 2, BlockState.CONSUMED)
    assert agent.check_watermarks() == ["a-b"]
    assert agent.check_watermarks() == []
    agent.ingest_blocks("a-b", make_blocks("a-b", 2, start=3))
    agent.kms.store.take("a-b", 2, BlockState.CONSUMED)
    assert agent.check_watermarks() == ["a-b"]
    bus.pump()
    lows = [m for m in inbox if isinstance(m, Notification) and m.kind == NotificationKind.KEY_LOW_WATERMARK]
    assert [m.payload["available_bits"] for m in lows] == [256, 256]


def test_report_status(wired):
    _, agent, _ = wired
    configure(agent)
    agent.ingest_blocks("a-b", make_blocks("a-b", 2))
    report = agent.report_status()
    assert report.node_id == "b"
    assert report.available_bits("a-b") == 512
    assert {i.iface_id: i.status for i in report.interfaces} == {
        "rx": InterfaceStatus.GENERATING, "rx2": InterfaceStatus.IDLE}


def test_application_lifecycle_notifications(wired):
    bus, agent, inbox = wired
    agent.connect_application("bob", "alice")
    with pytest.raises(ApplicationError) as exc:
        agent.connect_application("bob")
    assert exc.value.error_code == "DUPLICATE_APPLICATION"
    agent.disconnect_application("bob")
    with pytest.raises(ApplicationError) as exc:
        agent.disconnect_application("bob")
    assert exc.value.error_code == "UNREGISTERED_APPLICATION"
    bus.pump()
    notices = [m for m in inbox if isinstance(m, Notification)]
    assert [(n.kind, n.payload) for n in notices] == [
        (NotificationKind.APP_CONNECTED, {"app_id": "bob", "peer_app": "alice"}),
        (NotificationKind.APP_DISCONNECTED, {"app_id": "bob"}),
    ]
    assert [n.seq for n in notices] == [1, 2]


def test_peer_messages_drive_the_responder(wired):
    bus, agent, _ = wired
    configure(agent)
    blocks = make_blocks("a-b", 2)
    agent.ingest_blocks("a-b", blocks)
    agent.connect_application("bob")
    session = KeySession(session_id="s-1", initiator_app="alice", initiator_node="a",
                         responder_app="bob", responder_node="b", serving_link="a-b")
    agent.handle_message(PeerMessage(kind="session_open", sender="a", session_id="s-1",
                                     payload={"session": session.model_dump(mode="json")}))
    agent.handle_message(PeerMessage(kind="reserve", sender="a", session_id="s-1", payload={
        "reservations": [{"key_id": "a-b:0:256", "link_id": "a-b", "block_ids": [0], "size_bits": 256}]}))
    assert agent.kms.store.counters("a-b").reserved_bits == 256
    [key] = agent.get_key_with_ids("s-1", "bob", ["a-b:0:256"])
    assert key.bytes == blocks[0].bytes

    agent.handle_message(PeerMessage(kind="session_close", sender="a", session_id="s-1"))
    assert agent.kms.sessions["s-1"].state.value == "closed"
    # a bad reservation is logged, not raised
    agent.handle_message(PeerMessage(kind="reserve", sender="a", session_id="s-1", payload={
        "reservations": [{"key_id": "a-b:1:256", "link_id": "a-b", "block_ids": [1], "size_bits": 256}]}))
    assert agent.kms.store.counters("a-b").reserved_bits == 0


def test_directive_memo_evicts_least_recent():
    memo = DirectiveMemo(capacity=2)
    for i in range(3):
        memo.remember(DirectiveAck(directive_id=f"d-{i}", node_id="n"))
    assert "d-0" not in memo and len(memo) == 2
    memo.get("d-1")
    memo.remember(DirectiveAck(directive_id="d-3", node_id="n"))
    assert "d-1" in memo and "d-2" not in memo


def test_watermark_counts_only_allocatable_key(wired):
    bus, agent, inbox = wired
    configure(agent)
    agent.ingest_blocks("a-b", make_blocks("a-b", 4))
    taken = agent.kms.store.take("a-b", 3, BlockState.RESERVED)
    agent.kms.store.release("a-b", [b.block_id for b in taken])
    assert agent.check_watermarks() == ["a-b"]
    report = agent.report_status()
    assert report.available_bits("a-b") == 1024
    assert report.allocatable_bits("a-b") == 256
    bus.pump()
    [low] = [m for m in inbox if isinstance(m, Notification) and m.kind == NotificationKind.KEY_LOW_WATERMARK]
    assert low.payload == {"link_id": "a-b", "allocatable_bits": 256, "available_bits": 1024}


def test_report_lists_connected_applications(wired):
    _, agent, _ = wired
    agent.connect_application("bob")
    agent.connect_application("carol")
    report = agent.report_status()
    assert report.connected_apps == ["bob", "carol"]
    assert set(report.applications) == {"bob", "carol"}
    assert report.applications["bob"].keys_delivered == 0


def test_hybrid_sessions_need_the_capability(wired):
    _, agent, _ = wired
    configure(agent)
    agent.connect_application("bob")
    session = KeySession(session_id="s-1", initiator_app="bob", initiator_node="b",
                         responder_app="alice", responder_node="a", serving_link="a-b",
                         qos=QoS(hybrid=True))
    with pytest.raises(KeyDeliveryError) as exc:
        agent.open_session(session)
    assert exc.value.error_code == "HYBRID_UNSUPPORTED"
    peer_side = session.model_copy(update={"session_id": "s-2", "initiator_node": "a",
                                           "initiator_app": "alice", "responder_node": "b",
                                           "responder_app": "bob"})
    agent.handle_message(PeerMessage(kind="session_open", sender="a", session_id="s-2",
                                     payload={"session": peer_side.model_dump(mode="json")}))
    assert agent.kms.sessions == {}
