"""Invariant checks over a topology and relay-path resolution."""

from collections import Counter
from typing import List, Optional

from .topology import InterfaceRole, Link, LinkKind, LinkStatus, Topology, Violation
from ..utils.exceptions import LinkError


def physical_link_between(topology: Topology, node_a: str, node_b: str) -> Optional[Link]:
    """Active physical link joining two nodes; lowest link_id wins among parallels."""
    for link in topology.links_between(node_a, node_b):
        if link.is_physical and link.is_active:
            return link
    return None


def validate_topology(topology: Topology) -> List[Violation]:
    """Return every invariant violation of a topology. Empty means valid."""
    violations: List[Violation] = []

    def flag(code: str, message: str, subject: Optional[str] = None):
        violations.append(Violation(code=code, message=message, subject=subject))

    for node_id, node in topology.nodes.items():
        if node.node_id != node_id:
            flag("node_id_mismatch",
                 f"node registered as '{node_id}' describes itself as '{node.node_id}'", node_id)
        counts = Counter(iface.iface_id for iface in node.interfaces)
        for iface_id, n in sorted(counts.items()):
            if n > 1:
                flag("duplicate_node_interface",
                     f"interface '{iface_id}' declared {n} times on node '{node_id}'", node_id)

    attachments: Counter = Counter()
    iface_pairs: Counter = Counter()

    for link_id in sorted(topology.links):
        link = topology.links[link_id]
        a, b = link.endpoints
        missing = [n for n in (a, b) if n not in topology.nodes]
        for node_id in missing:
            flag("unknown_endpoint", f"link '{link_id}' references unknown node '{node_id}'", link_id)
        if a == b:
            flag("self_link", f"link '{link_id}' joins node '{a}' to itself", link_id)

        if link.kind == LinkKind.PHYSICAL:
            if link.fiber is None or link.rate_profile is None:
                flag("physical_missing_fiber",
                     f"physical link '{link_id}' needs a fiber spec and a rate profile", link_id)
            if link.path is not None:
                flag("physical_has_path", f"physical link '{link_id}' carries a relay path", link_id)
            if link.interfaces is not None and not missing and link.status != LinkStatus.DOWN:
                ifaces = []
                for node_id, iface_id in zip(link.endpoints, link.interfaces):
                    iface = topology.nodes[node_id].get_interface(iface_id)
                    if iface is None:
                        flag("unknown_interface",
                             f"link '{link_id}' uses unknown interface '{node_id}.{iface_id}'", link_id)
                    else:
                        ifaces.append(iface)
                        attachments[(node_id, iface_id)] += 1
                if len(ifaces) == 2 and {i.role for i in ifaces} != {
                        InterfaceRole.TRANSMITTER, InterfaceRole.RECEIVER}:
                    flag("role_mismatch",
                         f"link '{link_id}' does not pair a transmitter with a receiver", link_id)
                pair = frozenset(zip(link.endpoints, link.interfaces))
                iface_pairs[pair] += 1
                if iface_pairs[pair] == 2:
                    flag("duplicate_physical_link",
                         f"interface pair of link '{link_id}' already carries a physical link", link_id)
            continue

        if link.fiber is not None or link.spectrum is not None or link.rate_profile is not None:
            flag("virtual_has_physical_fields",
                 f"virtual link '{link_id}' carries physical-layer fields", link_id)
        path = link.path or []
        if len(path) < 3:
            flag("path_too_short",
                 f"virtual link '{link_id}' path has {len(path)} nodes, needs at least 3", link_id)
            continue
        if (path[0], path[-1]) != (a, b):
            flag("path_endpoint_mismatch",
                 f"virtual link '{link_id}' path does not run from '{a}' to '{b}'", link_id)
        if len(set(path)) != len(path):
            flag("path_cycle", f"virtual link '{link_id}' path visits a node twice", link_id)
        if link.status != LinkStatus.DOWN:
            for hop_a, hop_b in zip(path, path[1:]):
                if physical_link_between(topology, hop_a, hop_b) is None:
                    flag("broken_relay_path",
                         f"virtual link '{link_id}' has no active physical hop {hop_a}-{hop_b}", link_id)

    for (node_id, iface_id), n in sorted(attachments.items()):
        if n > 1:
            flag("interface_multi_attached",
                 f"interface '{node_id}.{iface_id}' is attached to {n} physical links", node_id)

    return violations


def underlying_physical_links(topology: Topology, virtual_link: Link) -> List[str]:
    """Physical link ids carrying a virtual link, one per hop, in path order."""
    if virtual_link.kind != LinkKind.VIRTUAL:
        raise LinkError(
            f"Link '{virtual_link.link_id}' is not a virtual link",
            error_code="WRONG_LINK_KIND",
            link_id=virtual_link.link_id)
    path = virtual_link.path or []
    if len(path) < 3:
        raise LinkError(
            f"Virtual link '{virtual_link.link_id}' path too short",
            error_code="PATH_TOO_SHORT",
            link_id=virtual_link.link_id)

    hops: List[str] = []
    for hop_a, hop_b in zip(path, path[1:]):
        link = physical_link_between(topology, hop_a, hop_b)
        if link is None:
            raise LinkError(
                f"broken relay path: no active physical link between '{hop_a}' and '{hop_b}'",
                error_code="BROKEN_RELAY_PATH",
                link_id=virtual_link.link_id,
                details={"pair": [hop_a, hop_b]})
        hops.append(link.link_id)
    return hops
