"""Relay path computation over the physical QKD graph."""

from typing import Callable, List, Optional

import networkx as nx

from ..linksim import link_key_rate
from ..models.control import PathConstraints
from ..models.topology import Topology
from ..utils.exceptions import RoutingError

AvailabilityFn = Callable[[str], int]


def build_key_graph(
    topology: Topology,
    constraints: Optional[PathConstraints] = None,
    availability: Optional[AvailabilityFn] = None
) -> nx.Graph:
    """Undirected graph of active physical links meeting the per-hop constraints.

    Edge attribute `rate` is the best expected key rate among the feasible
    parallel links joining the two nodes.
    """
    constraints = constraints or PathConstraints()
    graph = nx.Graph()
    graph.add_nodes_from(sorted(topology.nodes))
    for link in sorted(topology.physical_links(), key=lambda l: l.link_id):
        if not link.is_active:
            continue
        if constraints.min_available_bits > 0:
            available = availability(link.link_id) if availability else 0
            if available < constraints.min_available_bits:
                continue
        a, b = link.endpoints
        rate = link_key_rate(link)
        if graph.has_edge(a, b):
            rate = max(rate, graph[a][b]["rate"])
        graph.add_edge(a, b, rate=rate, link_id=link.link_id)
    return graph


def bottleneck_rate(graph: nx.Graph, path: List[str]) -> float:
    return min(graph[u][v]["rate"] for u, v in zip(path, path[1:]))


def compute_path(
    topology: Topology,
    src: str,
    dst: str,
    constraints: Optional[PathConstraints] = None,
    availability: Optional[AvailabilityFn] = None
) -> Optional[List[str]]:
    """Node sequence from src to dst, or None when no feasible path exists.

    Minimal hop count first, then maximal bottleneck expected rate, then the
    lexicographically smallest node sequence.
    """
    for node_id in (src, dst):
        if node_id not in topology.nodes:
            raise RoutingError(f"Unknown node '{node_id}'", error_code="UNKNOWN_NODE",
                               details={"node_id": node_id})
    if src == dst:
        raise RoutingError(f"source and destination are both '{src}'", error_code="SAME_ENDPOINTS")

    graph = build_key_graph(topology, constraints, availability)
    if not nx.has_path(graph, src, dst):
        return None
    candidates = list(nx.all_shortest_paths(graph, src, dst))
    return min(candidates, key=lambda p: (-bottleneck_rate(graph, p), p))
