"""Per-node SDN agent."""

from .core import ON_DEMAND, PRE_PROVISIONED, SDNAgent
from .memory import AgentState, DirectiveMemo, LinkEndpoint, RelayContext

__all__ = [
    "ON_DEMAND",
    "PRE_PROVISIONED",
    "SDNAgent",
    "AgentState",
    "DirectiveMemo",
    "LinkEndpoint",
    "RelayContext",
]
