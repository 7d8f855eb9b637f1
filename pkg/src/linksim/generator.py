"""Deterministic synchronized key-block generation.

Block bytes come from a keyed counter-mode generator seeded per
(scenario seed, link_id); both endpoints derive the same bytes, which stands
in for the quantum channel.
"""

import hashlib
from typing import List, Optional

from ..config import settings
from ..models.physical import KeyBlock
from ..models.topology import Link
from ..utils.exceptions import DomainError, LinkError
from .rate import link_key_rate


def link_secret(seed: int, link_id: str) -> bytes:
    """Per-link generator key."""
    return hashlib.blake2b(f"{seed}:{link_id}".encode("utf-8"), digest_size=32).digest()


def block_bytes(secret: bytes, block_id: int, size_bytes: int) -> bytes:
    """Bytes of one block: blake2b(secret, block_id || counter) chunks, truncated."""
    out = bytearray()
    counter = 0
    while len(out) < size_bytes:
        message = block_id.to_bytes(8, "big") + counter.to_bytes(4, "big")
        out += hashlib.blake2b(message, key=secret, digest_size=64).digest()
        counter += 1
    return bytes(out[:size_bytes])


class KeyBlockGenerator:
    """Turns a link's key rate into fixed-size blocks, carrying sub-block remainders."""

    def __init__(
        self,
        link: Link,
        seed: int,
        block_size_bits: Optional[int] = None,
        channel_penalty_db: Optional[float] = None
    ):
        self.block_size_bits = block_size_bits or settings.block_size_bits
        if self.block_size_bits <= 0 or self.block_size_bits % 8:
            raise DomainError("block size must be a positive multiple of 8 bits",
                              details={"block_size_bits": self.block_size_bits})
        self.link = link
        self.rate_bps = link_key_rate(link, channel_penalty_db)
        self._secret = link_secret(seed, link.link_id)
        self.next_block_id = 0
        self.pending_bits = 0.0
        self.generated_bits = 0

    def generate(self, duty: float, duration_s: float, now: float = 0.0) -> List[KeyBlock]:
        """Blocks produced over duration_s at the given duty, in block_id order."""
        if not self.link.is_physical or not self.link.is_active:
            raise LinkError(f"Link '{self.link.link_id}' is not an active physical link",
                            error_code="LINK_INACTIVE", link_id=self.link.link_id)
        if not 0.0 <= duty <= 1.0:
            raise DomainError(f"duty must lie in [0, 1], got {duty}")
        if duration_s < 0:
            raise DomainError(f"duration must be non-negative, got {duration_s}")

        self.pending_bits += self.rate_bps * duty * duration_s
        n_blocks = int(self.pending_bits // self.block_size_bits)
        self.pending_bits -= n_blocks * self.block_size_bits

        size_bytes = self.block_size_bits // 8
        blocks = []
        for _ in range(n_blocks):
            blocks.append(KeyBlock(
                block_id=self.next_block_id,
                link_id=self.link.link_id,
                bytes=block_bytes(self._secret, self.next_block_id, size_bytes),
                created_at=now,
            ))
            self.next_block_id += 1
        self.generated_bits += n_blocks * self.block_size_bits
        return blocks


def generate_key_blocks(
    link: Link,
    duty: float,
    duration_s: float,
    seed: int,
    block_size_bits: Optional[int] = None,
    generator: Optional[KeyBlockGenerator] = None
) -> List[KeyBlock]:
    """Blocks for both endpoints of a link. Pass a generator to carry remainders across calls."""
    generator = generator or KeyBlockGenerator(link, seed, block_size_bits)
    return generator.generate(duty, duration_s)
