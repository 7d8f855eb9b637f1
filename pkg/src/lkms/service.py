"""Local Key Management System: sessions and the application-facing key delivery interface."""

from typing import Dict, List, Optional, Tuple

from .store import KeyStore
from ..models.keys import (
    AppUsage, DeliveredKey, KeyReservation, KeySession, SessionState, StoreCounters)
from ..models.physical import BlockState, KeyBlock
from ..utils.exceptions import DomainError, KeyDeliveryError, KeyDepletionError
from ..utils.logging_config import log_key_delivery, log_step


def key_id_for(link_id: str, first_block_id: int, size_bits: int) -> str:
    """Self-describing key id: link, first block, size."""
    return f"{link_id}:{first_block_id}:{size_bits}"


def assemble_key(blocks: List[KeyBlock], size_bits: int) -> bytes:
    """First size_bits bits of the concatenated blocks; trailing bits of the last byte zeroed."""
    data = b"".join(block.bytes for block in blocks)
    n_bytes = (size_bits + 7) // 8
    key = bytearray(data[:n_bytes])
    spare = n_bytes * 8 - size_bits
    if spare:
        key[-1] &= (0xFF << spare) & 0xFF
    return bytes(key)


class LocalKMS:
    """Key store and key delivery endpoint of one SDQKD node."""

    def __init__(self, node_id: str, block_size_bits: Optional[int] = None):
        self.node_id = node_id
        self.store = KeyStore(node_id, block_size_bits)
        self.sessions: Dict[str, KeySession] = {}
        self.relayed_keys: Dict[str, DeliveredKey] = {}
        self.usage: Dict[str, AppUsage] = {}
        # responder side: key ids reserved by the peer
        self._reserved: Dict[str, KeyReservation] = {}
        self._reserved_by_session: Dict[str, List[str]] = {}
        self._fetched: set = set()

    @property
    def block_size_bits(self) -> int:
        return self.store.block_size_bits

    def ingest_blocks(self, link_id: str, blocks: List[KeyBlock]) -> StoreCounters:
        """Append synchronized blocks of a link."""
        return self.store.ingest_blocks(link_id, blocks)

    def available_bits(self, link_id: str) -> int:
        return self.store.available_bits(link_id)

    def register_application(self, app_id: str) -> AppUsage:
        """Start usage accounting for an application; earlier usage is kept on reconnect."""
        return self.usage.setdefault(app_id, AppUsage())

    # Sessions

    def open_session(self, session: KeySession) -> KeySession:
        """Record a session at this end. The serving link must be known locally."""
        if session.session_id in self.sessions:
            raise KeyDeliveryError(f"Session '{session.session_id}' already exists",
                                   error_code="DUPLICATE_SESSION", session_id=session.session_id)
        if not self.store.has_link(session.serving_link):
            raise KeyDeliveryError(
                f"no key association: link '{session.serving_link}' not present at '{self.node_id}'",
                error_code="NO_KEY_ASSOCIATION", session_id=session.session_id)
        self.sessions[session.session_id] = session
        self._reserved_by_session[session.session_id] = []
        log_step("session", action="opened", node=self.node_id, session=session.session_id,
                 link=session.serving_link)
        return session

    def close_session(self, session_id: str) -> int:
        """Close a session; reserved-but-unfetched blocks return to available. Returns released bits."""
        session = self._open_session(session_id)
        released = 0
        for key_id in self._reserved_by_session.get(session_id, []):
            if key_id in self._fetched:
                continue
            reservation = self._reserved.pop(key_id)
            released += self.store.release(reservation.link_id, reservation.block_ids)
        self.sessions[session_id] = session.model_copy(update={"state": SessionState.CLOSED})
        log_step("session", action="closed", node=self.node_id, session=session_id,
                 released_bits=released)
        return released

    def abandon_link_sessions(self, link_id: str) -> List[str]:
        """Close every open session served by a link that is going away; its blocks go with it."""
        closed = []
        for session_id, session in sorted(self.sessions.items()):
            if session.serving_link == link_id and session.state == SessionState.OPEN:
                for key_id in self._reserved_by_session.get(session_id, []):
                    self._reserved.pop(key_id, None)
                self.sessions[session_id] = session.model_copy(update={"state": SessionState.CLOSED})
                closed.append(session_id)
        return closed

    # Initiator side

    def get_key(
        self, session_id: str, app_id: str, count: int, size_bits: int
    ) -> Tuple[List[DeliveredKey], List[KeyReservation]]:
        """Allocate count keys of size_bits; returns the keys and the reservations for the peer."""
        session = self._open_session(session_id)
        if session.role_of(self.node_id, app_id) != "initiator":
            raise KeyDeliveryError(
                f"role violation: '{app_id}' is not the initiator of session '{session_id}'",
                error_code="ROLE_VIOLATION", session_id=session_id)
        if count < 0 or size_bits <= 0:
            raise DomainError("count must be >= 0 and size_bits > 0",
                              error_code="INVALID_KEY_REQUEST",
                              details={"count": count, "size_bits": size_bits})
        if count == 0:
            return [], []

        link_id = session.serving_link
        per_key = -(-size_bits // self.block_size_bits)
        needed_bits = count * per_key * self.block_size_bits
        allocatable = self.store.allocatable_bits(link_id)
        if allocatable < needed_bits:
            raise KeyDepletionError(
                f"key depletion on '{link_id}': {needed_bits} bits needed, {allocatable} available",
                link_id=link_id, available_bits=allocatable, requested_bits=needed_bits,
                session_id=session_id)

        blocks = self.store.take(link_id, count * per_key, BlockState.CONSUMED)
        keys: List[DeliveredKey] = []
        reservations: List[KeyReservation] = []
        for i in range(count):
            chunk = blocks[i * per_key:(i + 1) * per_key]
            key_id = key_id_for(link_id, chunk[0].block_id, size_bits)
            reservation = KeyReservation(
                key_id=key_id, link_id=link_id,
                block_ids=[b.block_id for b in chunk], size_bits=size_bits)
            reservations.append(reservation)
            keys.append(DeliveredKey(key_id=key_id, bytes=assemble_key(chunk, size_bits),
                                     session_id=session_id, size_bits=size_bits))

        self._account(app_id, len(keys), len(blocks) * self.block_size_bits)
        log_key_delivery(session_id, count, size_bits, node=self.node_id, side="initiator")
        return keys, reservations

    # Responder side

    def reserve_for_peer(self, session_id: str, reservations: List[KeyReservation]) -> None:
        """Mark the blocks behind the initiator's new key ids as reserved here."""
        self._open_session(session_id)
        for reservation in reservations:
            self.store.claim(reservation.link_id, reservation.block_ids, BlockState.RESERVED)
            self._reserved[reservation.key_id] = reservation
            self._reserved_by_session[session_id].append(reservation.key_id)

    def get_key_with_ids(self, session_id: str, app_id: str, key_ids: List[str]) -> List[DeliveredKey]:
        """Fetch keys the initiator allocated, by id."""
        session = self._open_session(session_id)
        if session.role_of(self.node_id, app_id) != "responder":
            raise KeyDeliveryError(
                f"role violation: '{app_id}' is not the responder of session '{session_id}'",
                error_code="ROLE_VIOLATION", session_id=session_id)

        for key_id in key_ids:
            if key_id in self._fetched:
                raise KeyDeliveryError(f"key replay refused for '{key_id}'",
                                       error_code="KEY_REPLAY_REFUSED", session_id=session_id)
            if key_id not in self._reserved_by_session[session_id]:
                raise KeyDeliveryError(f"unknown key id '{key_id}'",
                                       error_code="UNKNOWN_KEY_ID", session_id=session_id)
        if len(set(key_ids)) != len(key_ids):
            raise KeyDeliveryError("key replay refused: duplicate ids in request",
                                   error_code="KEY_REPLAY_REFUSED", session_id=session_id)

        keys: List[DeliveredKey] = []
        consumed_bits = 0
        for key_id in key_ids:
            reservation = self._reserved[key_id]
            blocks = self.store.consume_reserved(reservation.link_id, reservation.block_ids)
            self._fetched.add(key_id)
            consumed_bits += len(blocks) * self.block_size_bits
            keys.append(DeliveredKey(key_id=key_id,
                                     bytes=assemble_key(blocks, reservation.size_bits),
                                     session_id=session_id, size_bits=reservation.size_bits))

        self._account(app_id, len(keys), consumed_bits)
        if keys:
            log_key_delivery(session_id, len(keys), keys[0].size_bits, node=self.node_id,
                             side="responder")
        return keys

    # Relayed keys

    def store_relayed_key(self, key: DeliveredKey) -> None:
        """Materialize a key delivered over a virtual link."""
        self.relayed_keys[key.key_id] = key

    def _account(self, app_id: str, keys: int, bits: int) -> None:
        usage = self.usage.setdefault(app_id, AppUsage())
        usage.keys_delivered += keys
        usage.bits_consumed += bits

    def _open_session(self, session_id: str) -> KeySession:
        session = self.sessions.get(session_id)
        if session is None:
            raise KeyDeliveryError(f"Unknown session '{session_id}'",
                                   error_code="UNKNOWN_SESSION", session_id=session_id)
        if session.state != SessionState.OPEN:
            raise KeyDeliveryError(f"Session '{session_id}' is closed",
                                   error_code="SESSION_CLOSED", session_id=session_id)
        return session
