"""One-time-pad and hybrid key combination."""

import hashlib

import numpy as np

from ..linksim.generator import block_bytes
from ..utils.exceptions import DomainError


def xor_otp(data: bytes, pad: bytes) -> bytes:
    """Bytewise XOR of equal-length strings."""
    if len(data) != len(pad):
        raise DomainError(
            f"one-time pad length mismatch: {len(data)} data bytes, {len(pad)} pad bytes",
            error_code="LENGTH_MISMATCH",
            details={"data_bytes": len(data), "pad_bytes": len(pad)})
    return np.bitwise_xor(
        np.frombuffer(data, dtype=np.uint8), np.frombuffer(pad, dtype=np.uint8)).tobytes()


def truncate_bits(data: bytes, size_bits: int) -> bytes:
    """First size_bits bits of data; trailing bits of the last byte zeroed."""
    n_bytes = (size_bits + 7) // 8
    key = bytearray(data[:n_bytes])
    spare = n_bytes * 8 - size_bits
    if spare:
        key[-1] &= (0xFF << spare) & 0xFF
    return bytes(key)


def hybrid_combine(qkd_key: bytes, classical_key: bytes) -> bytes:
    """XOR a QKD-derived key with a conventionally agreed key of the same length.

    The result is as strong as the stronger of the two inputs.
    """
    return xor_otp(qkd_key, classical_key)


def classical_key(seed: int, session_id: str, key_id: str, size_bits: int) -> bytes:
    """Conventionally agreed key for one key id; both session ends derive the same bytes."""
    secret = hashlib.blake2b(f"{seed}:{session_id}:{key_id}".encode("utf-8"), digest_size=32).digest()
    return truncate_bits(block_bytes(secret, 0, (size_bits + 7) // 8), size_bits)
