"""Time sharing of one QKD transmitter between several receivers."""

from collections import defaultdict
from typing import Dict, List, Tuple

from ..models.physical import SchedulerConfig
from ..models.topology import InterfaceRole, Topology
from ..utils.exceptions import DomainError


def schedule_transmitter(tx_node: str, links: List[str], cfg: SchedulerConfig) -> Dict[str, float]:
    """Duty fraction per link sharing one transmitter.

    While the transmitter serves one receiver the others calibrate, so when
    n * (1 - calibration_fraction) <= 1 every link gets the same duty a
    dedicated link would (1 - calibration_fraction). Otherwise links get equal
    shares 1/n.
    """
    if not links:
        raise DomainError(f"transmitter '{tx_node}' has no links to schedule",
                          error_code="EMPTY_SCHEDULE")
    n = len(links)
    dedicated = 1.0 - cfg.calibration_fraction
    duty = dedicated if n * dedicated <= 1.0 else 1.0 / n
    return {link_id: duty for link_id in sorted(links)}


def transmitter_groups(topology: Topology) -> Dict[Tuple[str, str], List[str]]:
    """Active physical links grouped by transmitter device (node, device)."""
    groups: Dict[Tuple[str, str], List[str]] = defaultdict(list)
    for link in topology.physical_links():
        if not link.is_active or link.interfaces is None:
            continue
        for node_id, iface_id in zip(link.endpoints, link.interfaces):
            node = topology.nodes.get(node_id)
            iface = node.get_interface(iface_id) if node else None
            if iface is not None and iface.role == InterfaceRole.TRANSMITTER:
                groups[(node_id, iface.device_id or iface_id)].append(link.link_id)
    return {key: sorted(ids) for key, ids in sorted(groups.items())}


def slot_owner(links: List[str], slot_index: int) -> str:
    """Link the transmitter serves during a slot; the others calibrate."""
    return sorted(links)[slot_index % len(links)]
