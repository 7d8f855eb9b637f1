"""Trusted-relay virtual links and one-time-pad key forwarding."""

from .otp import classical_key, hybrid_combine, truncate_bits, xor_otp
from .relay import (
    RelayFrame,
    RelayResult,
    check_hop_pad,
    draw_relay_key,
    establish_virtual_link,
    open_hop,
    orient_path,
    pad_blocks_needed,
    provision_virtual_link,
    relay_key,
    relay_key_id,
    relay_record,
    seal_hop,
    split_into_blocks,
)

__all__ = [
    "classical_key",
    "hybrid_combine",
    "truncate_bits",
    "xor_otp",
    "RelayFrame",
    "RelayResult",
    "check_hop_pad",
    "draw_relay_key",
    "establish_virtual_link",
    "open_hop",
    "orient_path",
    "pad_blocks_needed",
    "provision_virtual_link",
    "relay_key",
    "relay_key_id",
    "relay_record",
    "seal_hop",
    "split_into_blocks",
]
