"""Classical connectivity between nodes, used to route agent-to-agent messages."""

from typing import Dict, List, Optional

import networkx as nx

from ..linksim import compute_loss
from ..models.topology import FiberSpec
from ..utils.exceptions import LinkError
from ..utils.logging_config import log_step

SERVICE_CHANNEL = "service"
DEDICATED_CHANNEL = "dedicated"


class ClassicalNetwork:
    """Undirected graph of classical channels.

    Every QKD link brings a service channel between its endpoints; scenarios
    may add dedicated classical fibers between any two nodes.
    """

    def __init__(self):
        self.graph = nx.Graph()

    def add_node(self, node_id: str) -> None:
        self.graph.add_node(node_id)

    def add_channel(
        self,
        node_a: str,
        node_b: str,
        kind: str = DEDICATED_CHANNEL,
        fiber: Optional[FiberSpec] = None,
        n_classical: int = 0
    ) -> None:
        if node_a == node_b:
            raise LinkError(f"classical channel from '{node_a}' to itself",
                            error_code="SELF_CHANNEL")
        if self.graph.has_edge(node_a, node_b) and self.graph[node_a][node_b]["kind"] == DEDICATED_CHANNEL:
            return
        self.graph.add_edge(node_a, node_b, kind=kind, n_classical=n_classical,
                            loss_db=compute_loss(fiber) if fiber is not None else None)
        log_step("link", action="classical channel", node_a=node_a, node_b=node_b, kind=kind)

    def route(self, src: str, dst: str) -> List[str]:
        """Fewest classical hops, then the lexicographically smallest node sequence."""
        if src == dst:
            return [src]
        try:
            return min(nx.all_shortest_paths(self.graph, src, dst))
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            raise LinkError(f"no classical path from '{src}' to '{dst}'",
                            error_code="NO_CLASSICAL_PATH", details={"src": src, "dst": dst})

    def channels(self) -> List[Dict[str, object]]:
        return [{"node_a": a, "node_b": b, **attrs}
                for a, b, attrs in sorted(self.graph.edges(data=True),
                                          key=lambda e: tuple(sorted(e[:2])))]
