"""Virtual links over trusted nodes and hop-by-hop one-time-pad key forwarding."""

from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from .otp import truncate_bits, xor_otp
from ..config import settings
from ..lkms import LocalKMS, assemble_key
from ..models.keys import DeliveredKey, RelayRecord
from ..models.physical import BlockState, KeyBlock
from ..models.topology import Link, LinkKind, LinkStatus, Topology
from ..models.validation import underlying_physical_links
from ..utils.exceptions import RelayDepletionError, RelayError
from ..utils.logging_config import log_relay

KmsResolver = Callable[[str], LocalKMS]


class RelayFrame(BaseModel):
    """Ciphertext handed from one trusted node to the next."""
    virtual_link_id: str
    hop_index: int
    hop_link_id: str
    block_ids: List[int]
    ciphertext: bytes


class RelayResult(BaseModel):
    """Outcome of a relay: the key as seen at both ends plus the accounting record."""
    source_key: DeliveredKey
    destination_key: DeliveredKey
    record: RelayRecord


def establish_virtual_link(
    topology: Topology,
    node_a: str,
    node_b: str,
    path: List[str],
    link_id: Optional[str] = None,
    status: LinkStatus = LinkStatus.ACTIVE
) -> Link:
    """Register a virtual link over a trusted-node path. No key material is pre-copied."""
    if len(path) < 3:
        raise RelayError(f"relay path {path} too short: needs at least one trusted node",
                         error_code="PATH_TOO_SHORT")
    if (path[0], path[-1]) != (node_a, node_b):
        raise RelayError(f"endpoints {node_a}, {node_b} are not the extremes of path {path}",
                         error_code="ENDPOINTS_NOT_PATH_EXTREMES")
    if len(set(path)) != len(path):
        raise RelayError(f"relay path {path} visits a node twice", error_code="PATH_CYCLE")

    if link_id is None:
        link_id = f"vl-{node_a}-{node_b}"
        suffix = 1
        while link_id in topology.links:
            suffix += 1
            link_id = f"vl-{node_a}-{node_b}-{suffix}"
    elif link_id in topology.links:
        raise RelayError(f"link id '{link_id}' already in use", error_code="DUPLICATE_LINK")

    link = Link(link_id=link_id, kind=LinkKind.VIRTUAL, endpoints=(node_a, node_b),
                path=list(path), status=status)
    # raises on a broken hop
    underlying_physical_links(topology, link)
    topology.links[link_id] = link
    return link


def pad_blocks_needed(length_bits: int, auth_overhead_bits: int, block_size_bits: int) -> int:
    return -(-(length_bits + auth_overhead_bits) // block_size_bits)


def orient_path(
    virtual_link: Link, hops: List[str], source: Optional[str] = None
) -> Tuple[List[str], List[str]]:
    """Node path and hop links of a virtual link as walked from `source`."""
    hops = list(hops)
    if virtual_link.kind != LinkKind.VIRTUAL or len(hops) != len(virtual_link.path or []) - 1:
        raise RelayError(f"hop links {hops} do not match link '{virtual_link.link_id}'",
                         error_code="HOP_MISMATCH")
    path = list(virtual_link.path)
    source = source or virtual_link.endpoints[0]
    if source == virtual_link.endpoints[1]:
        path.reverse()
        hops.reverse()
    elif source != virtual_link.endpoints[0]:
        raise RelayError(f"'{source}' is not an endpoint of '{virtual_link.link_id}'",
                         error_code="NOT_AN_ENDPOINT")
    return path, hops


def check_hop_pad(kms: LocalKMS, hop_link: str, hop_index: int, needed_bits: int) -> None:
    """Raise if this end of a hop cannot supply a pad of needed_bits."""
    available = kms.store.allocatable_bits(hop_link)
    if available < needed_bits:
        raise RelayDepletionError(
            f"relay key depletion on hop {hop_index} ('{hop_link}' at '{kms.node_id}'): "
            f"{needed_bits} bits needed, {available} available",
            hop_link_id=hop_link, hop_index=hop_index, available_bits=available)


def draw_relay_key(rng: np.random.Generator, length_bits: int) -> bytes:
    if length_bits <= 0:
        raise RelayError("zero-length key refused", error_code="ZERO_LENGTH_KEY",
                         details={"length_bits": length_bits})
    return truncate_bits(rng.bytes((length_bits + 7) // 8), length_bits)


def relay_key_id(virtual_link_id: str, first_hop: str, first_block_id: int, length_bits: int) -> str:
    return f"{virtual_link_id}@{first_hop}:{first_block_id}:{length_bits}"


def relay_record(
    virtual_link_id: str,
    key_id: str,
    length_bits: int,
    hops: List[str],
    pad_bits: int,
    auth_overhead_bits_per_hop: int,
    at: float
) -> RelayRecord:
    return RelayRecord(
        virtual_link_id=virtual_link_id,
        key_id=key_id,
        delivered_bits=length_bits,
        per_hop_consumed_bits={hop_link: pad_bits for hop_link in hops},
        auth_overhead_bits_per_hop=auth_overhead_bits_per_hop,
        discarded_bits_per_hop=pad_bits - length_bits - auth_overhead_bits_per_hop,
        at=at,
    )


def seal_hop(
    pad: List[KeyBlock], virtual_link_id: str, hop_index: int, hop_link: str,
    length_bits: int, plaintext: bytes
) -> RelayFrame:
    """Sender side of a hop: encrypt under the pad blocks."""
    return RelayFrame(virtual_link_id=virtual_link_id, hop_index=hop_index, hop_link_id=hop_link,
                      block_ids=[b.block_id for b in pad],
                      ciphertext=xor_otp(plaintext, assemble_key(pad, length_bits)))


def open_hop(pad: List[KeyBlock], frame: RelayFrame, length_bits: int) -> bytes:
    """Receiver side of a hop: decrypt with the same pad blocks."""
    return xor_otp(frame.ciphertext, assemble_key(pad, length_bits))


def split_into_blocks(
    key: bytes, link_id: str, first_block_id: int, n_blocks: int, block_size_bits: int, at: float
) -> List[KeyBlock]:
    """Cut relayed key material into virtual-link store blocks."""
    size_bytes = block_size_bits // 8
    return [
        KeyBlock(block_id=first_block_id + i, link_id=link_id,
                 bytes=key[i * size_bytes:(i + 1) * size_bytes], created_at=at)
        for i in range(n_blocks)
    ]


def relay_key(
    topology: Optional[Topology],
    virtual_link: Link,
    length_bits: int,
    kms_for: KmsResolver,
    rng: np.random.Generator,
    auth_overhead_bits_per_hop: Optional[int] = None,
    source: Optional[str] = None,
    at: float = 0.0,
    materialize: bool = True,
    hops: Optional[List[str]] = None
) -> RelayResult:
    """Deliver a fresh random key from one end of a virtual link to the other, in process.

    Each hop consumes a pad from its physical link at both hop ends; the
    intermediate node recovers the key transiently and re-encrypts it for the
    next hop. All hops are checked before anything is consumed. Callers
    without a topology pass the hop link ids resolved by the controller.
    Agents run the same steps as messages over the bus.
    """
    if auth_overhead_bits_per_hop is None:
        auth_overhead_bits_per_hop = settings.auth_overhead_bits_per_hop
    if length_bits <= 0:
        raise RelayError("zero-length key refused", error_code="ZERO_LENGTH_KEY",
                         details={"length_bits": length_bits})
    if hops is None:
        hops = underlying_physical_links(topology, virtual_link)
    path, hops = orient_path(virtual_link, hops, source)

    block_size = kms_for(path[0]).block_size_bits
    n_blocks = pad_blocks_needed(length_bits, auth_overhead_bits_per_hop, block_size)
    needed = n_blocks * block_size
    for index, hop_link in enumerate(hops):
        for node_id in (path[index], path[index + 1]):
            check_hop_pad(kms_for(node_id), hop_link, index, needed)

    source_bytes = draw_relay_key(rng, length_bits)
    first_hop_blocks: List[int] = []
    carried = source_bytes
    for index, hop_link in enumerate(hops):
        pad = kms_for(path[index]).store.take(hop_link, n_blocks, BlockState.CONSUMED)
        frame = seal_hop(pad, virtual_link.link_id, index, hop_link, length_bits, carried)
        if index == 0:
            first_hop_blocks = frame.block_ids
        received = kms_for(path[index + 1]).store.claim(hop_link, frame.block_ids, BlockState.CONSUMED)
        carried = open_hop(received, frame, length_bits)

    key_id = relay_key_id(virtual_link.link_id, hops[0], first_hop_blocks[0], length_bits)
    source_key = DeliveredKey(key_id=key_id, bytes=source_bytes, session_id="relay",
                              size_bits=length_bits)
    destination_key = DeliveredKey(key_id=key_id, bytes=carried, session_id="relay",
                                   size_bits=length_bits)
    if materialize:
        kms_for(path[0]).store_relayed_key(source_key)
        kms_for(path[-1]).store_relayed_key(destination_key)

    record = relay_record(virtual_link.link_id, key_id, length_bits, hops, needed,
                          auth_overhead_bits_per_hop, at)
    log_relay(virtual_link.link_id, length_bits, len(hops), source=path[0],
              destination=path[-1], key_id=key_id)
    return RelayResult(source_key=source_key, destination_key=destination_key, record=record)


def provision_virtual_link(
    topology: Optional[Topology],
    virtual_link: Link,
    n_blocks: int,
    kms_for: KmsResolver,
    rng: np.random.Generator,
    auth_overhead_bits_per_hop: Optional[int] = None,
    source: Optional[str] = None,
    at: float = 0.0,
    hops: Optional[List[str]] = None
) -> RelayRecord:
    """Relay whole blocks and append them to both endpoints' virtual-link stores."""
    source = source or virtual_link.endpoints[0]
    block_size = kms_for(source).block_size_bits
    result = relay_key(topology, virtual_link, n_blocks * block_size, kms_for, rng,
                       auth_overhead_bits_per_hop, source=source, at=at, materialize=False, hops=hops)

    received = {source: result.source_key, virtual_link.peer_of(source): result.destination_key}
    for node_id, key in sorted(received.items()):
        kms = kms_for(node_id)
        kms.ingest_blocks(virtual_link.link_id, split_into_blocks(
            key.bytes, virtual_link.link_id, kms.store.next_block_id(virtual_link.link_id),
            n_blocks, block_size, at))
    return result.record
