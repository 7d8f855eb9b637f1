"""Per-node key store: synchronized block sequences per link with lifecycle accounting."""

from typing import Dict, Iterable, List, Optional

from ..config import settings
from ..models.keys import StoreCounters
from ..models.physical import BlockState, KeyBlock
from ..utils.exceptions import DesynchronizedLinkError, KeyDepletionError, LinkError


class _LinkLedger:
    """Blocks of one link plus the allocation high-water mark."""

    def __init__(self, link_id: str):
        self.link_id = link_id
        self.blocks: List[KeyBlock] = []
        # Highest block id ever allocated by either end; nothing at or below it is allocated again
        self.cursor = -1
        self.counters = StoreCounters()

    @property
    def next_block_id(self) -> int:
        return self.blocks[-1].block_id + 1 if self.blocks else 0

    def block(self, block_id: int) -> KeyBlock:
        if not self.blocks or not 0 <= block_id - self.blocks[0].block_id < len(self.blocks):
            raise DesynchronizedLinkError(
                f"block {block_id} unknown on link '{self.link_id}'", link_id=self.link_id)
        return self.blocks[block_id - self.blocks[0].block_id]


class KeyStore:
    """Key material held by one node, one ledger per link."""

    _counter_field = {
        BlockState.AVAILABLE: "available_bits",
        BlockState.RESERVED: "reserved_bits",
        BlockState.CONSUMED: "consumed_bits",
    }

    def __init__(self, node_id: str, block_size_bits: Optional[int] = None):
        self.node_id = node_id
        self.block_size_bits = block_size_bits or settings.block_size_bits
        self._ledgers: Dict[str, _LinkLedger] = {}

    # Link lifecycle

    def open_link(self, link_id: str) -> None:
        self._ledgers.setdefault(link_id, _LinkLedger(link_id))

    def drop_link(self, link_id: str) -> StoreCounters:
        ledger = self._ledgers.pop(link_id, None)
        return ledger.counters if ledger else StoreCounters()

    def has_link(self, link_id: str) -> bool:
        return link_id in self._ledgers

    def link_ids(self) -> List[str]:
        return sorted(self._ledgers)

    # Reads

    def counters(self, link_id: str) -> StoreCounters:
        return self._ledger(link_id).counters.model_copy()

    def available_bits(self, link_id: str) -> int:
        return self._ledger(link_id).counters.available_bits

    def allocatable_bits(self, link_id: str) -> int:
        """Available bits above the allocation mark, i.e. usable for new keys or pads."""
        ledger = self._ledger(link_id)
        return sum(b.size_bits for b in ledger.blocks
                   if b.state == BlockState.AVAILABLE and b.block_id > ledger.cursor)

    def block(self, link_id: str, block_id: int) -> KeyBlock:
        return self._ledger(link_id).block(block_id)

    def blocks(self, link_id: str) -> List[KeyBlock]:
        return list(self._ledger(link_id).blocks)

    def next_block_id(self, link_id: str) -> int:
        return self._ledger(link_id).next_block_id

    def contains_bytes(self, needle: bytes) -> bool:
        """True if needle appears anywhere in a link's concatenated block bytes."""
        for ledger in self._ledgers.values():
            data = b"".join(b.bytes for b in ledger.blocks)
            if needle and needle in data:
                return True
        return False

    # Writes

    def ingest_blocks(self, link_id: str, blocks: Iterable[KeyBlock]) -> StoreCounters:
        """Append blocks as available. Block ids must continue the tail without gaps."""
        ledger = self._ledger(link_id)
        for block in blocks:
            if block.link_id != link_id or block.block_id != ledger.next_block_id:
                raise DesynchronizedLinkError(
                    f"desynchronized link '{link_id}': expected block {ledger.next_block_id}, "
                    f"got {block.block_id}",
                    link_id=link_id,
                    details={"expected": ledger.next_block_id, "received": block.block_id})
            if block.size_bits != self.block_size_bits:
                raise DesynchronizedLinkError(
                    f"block {block.block_id} on '{link_id}' has {block.size_bits} bits, "
                    f"store uses {self.block_size_bits}", link_id=link_id)
            ledger.blocks.append(block.model_copy(update={"state": BlockState.AVAILABLE}))
            ledger.counters.generated_bits += block.size_bits
            ledger.counters.available_bits += block.size_bits
        return ledger.counters.model_copy()

    def take(self, link_id: str, n_blocks: int, state: BlockState = BlockState.CONSUMED) -> List[KeyBlock]:
        """Allocate the first n unallocated blocks, moving them to `state`."""
        ledger = self._ledger(link_id)
        picked = [b for b in ledger.blocks
                  if b.state == BlockState.AVAILABLE and b.block_id > ledger.cursor][:n_blocks]
        if len(picked) < n_blocks:
            raise KeyDepletionError(
                f"key depletion on link '{link_id}': {n_blocks * self.block_size_bits} bits requested, "
                f"{self.allocatable_bits(link_id)} available",
                link_id=link_id,
                available_bits=self.allocatable_bits(link_id),
                requested_bits=n_blocks * self.block_size_bits)
        for block in picked:
            self._transition(ledger, block, state)
        if picked:
            ledger.cursor = picked[-1].block_id
        return picked

    def claim(self, link_id: str, block_ids: List[int], state: BlockState) -> List[KeyBlock]:
        """Peer side of an allocation: the named blocks move from available to `state`."""
        ledger = self._ledger(link_id)
        blocks = [ledger.block(block_id) for block_id in block_ids]
        for block in blocks:
            if block.state != BlockState.AVAILABLE or block.block_id <= ledger.cursor:
                raise DesynchronizedLinkError(
                    f"desynchronized link '{link_id}': block {block.block_id} is {block.state.value}",
                    link_id=link_id)
        for block in blocks:
            self._transition(ledger, block, state)
        if blocks:
            ledger.cursor = max(ledger.cursor, max(block_ids))
        return blocks

    def consume_reserved(self, link_id: str, block_ids: List[int]) -> List[KeyBlock]:
        ledger = self._ledger(link_id)
        blocks = [ledger.block(block_id) for block_id in block_ids]
        for block in blocks:
            if block.state != BlockState.RESERVED:
                raise DesynchronizedLinkError(
                    f"block {block.block_id} on '{link_id}' is {block.state.value}, not reserved",
                    link_id=link_id)
        for block in blocks:
            self._transition(ledger, block, BlockState.CONSUMED)
        return blocks

    def release(self, link_id: str, block_ids: List[int]) -> int:
        """Reserved blocks go back to available; returns released bits."""
        ledger = self._ledger(link_id)
        released = 0
        for block_id in block_ids:
            block = ledger.block(block_id)
            if block.state == BlockState.RESERVED:
                self._transition(ledger, block, BlockState.AVAILABLE)
                released += block.size_bits
        return released

    def _transition(self, ledger: _LinkLedger, block: KeyBlock, state: BlockState) -> None:
        if block.state == BlockState.CONSUMED:
            raise DesynchronizedLinkError(
                f"block {block.block_id} on '{ledger.link_id}' is already consumed",
                link_id=ledger.link_id)
        if block.state == state:
            return
        setattr(ledger.counters, self._counter_field[block.state],
                getattr(ledger.counters, self._counter_field[block.state]) - block.size_bits)
        setattr(ledger.counters, self._counter_field[state],
                getattr(ledger.counters, self._counter_field[state]) + block.size_bits)
        block.state = state

    def _ledger(self, link_id: str) -> _LinkLedger:
        ledger = self._ledgers.get(link_id)
        if ledger is None:
            raise LinkError(f"Unknown link '{link_id}' at node '{self.node_id}'",
                            error_code="UNKNOWN_LINK", link_id=link_id)
        return ledger
