"""Metrics report of a run: per-link accounting, relays, application usage and event counts."""

import hashlib
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from .network import QKDNetwork
from ..linksim import link_loss
from ..models.keys import AppUsage, DeliveredKey, RelayRecord, StoreCounters
from ..models.topology import LinkKind, LinkStatus


class LinkMetrics(BaseModel):
    """Accounting of one link as both endpoints see it."""
    link_id: str
    kind: LinkKind
    status: LinkStatus
    endpoints: Dict[str, StoreCounters] = Field(default_factory=dict)
    expected_rate_bps: Optional[float] = None
    observed_rate_bps: Optional[float] = None
    active_time_s: float = 0.0
    duty: Optional[float] = None
    loss_db: Optional[float] = None
    path: Optional[List[str]] = None

    @property
    def generated_bits(self) -> int:
        """Bits generated as seen by the endpoint that saw fewest."""
        return min((c.generated_bits for c in self.endpoints.values()), default=0)


class MetricsReport(BaseModel):
    """Machine-readable outcome of a run; key order is stable for diffing."""
    scenario: str
    seed: int
    duration_s: float
    links: Dict[str, LinkMetrics] = Field(default_factory=dict)
    relays: List[RelayRecord] = Field(default_factory=list)
    applications: Dict[str, AppUsage] = Field(default_factory=dict)
    events: Dict[str, int] = Field(default_factory=dict)
    workload_failures: List[Dict[str, str]] = Field(default_factory=list)
    delivered_keys: int = 0
    delivered_key_digest: str = Field(default_factory=lambda: key_digest([]))
    event_log_entries: int = 0
    event_log_digest: Optional[str] = None


def key_digest(keys: List[DeliveredKey]) -> str:
    """SHA-256 over delivered key bytes in delivery order."""
    digest = hashlib.sha256()
    for key in keys:
        digest.update(key.bytes)
    return digest.hexdigest()


def collect_metrics(network: QKDNetwork, scenario_name: str, duration_s: float) -> MetricsReport:
    """Snapshot a network after a run."""
    controller = network.controller
    duties = network.current_duties()

    links: Dict[str, LinkMetrics] = {}
    for link_id in sorted(controller.topology.links):
        link = controller.topology.links[link_id]
        endpoints = {
            node_id: network.agents[node_id].kms.store.counters(link_id)
            for node_id in sorted(link.endpoints)
            if node_id in network.agents and network.agents[node_id].kms.store.has_link(link_id)
        }
        started = controller.activated_at.get(link_id)
        metrics = LinkMetrics(
            link_id=link_id,
            kind=link.kind,
            status=link.status,
            endpoints=endpoints,
            active_time_s=network.now - started if started is not None else 0.0,
            path=link.path,
        )
        if link.is_physical:
            metrics.expected_rate_bps = controller.expected_rates.get(link_id)
            metrics.observed_rate_bps = controller.observed_rate(link_id) if link.is_active else None
            metrics.duty = duties.get(link_id)
            metrics.loss_db = link_loss(link, network.channel_penalty_db)
        links[link_id] = metrics

    applications: Dict[str, AppUsage] = {}
    for node_id in sorted(network.agents):
        for app_id, usage in sorted(network.agents[node_id].kms.usage.items()):
            applications[f"{app_id}@{node_id}"] = usage.model_copy()

    events: Dict[str, int] = {f"scheduler.{kind}": n for kind, n in network.events.counts.items()}
    events.update({f"notification.{kind}": n for kind, n in controller.notification_counts.items()})
    events["bus.delivered"] = network.bus.delivered
    events["notifications.duplicates_dropped"] = controller.duplicates_dropped
    events["directives.executed"] = sum(a.directives_executed for a in network.agents.values())

    return MetricsReport(
        scenario=scenario_name,
        seed=network.seed,
        duration_s=duration_s,
        links=links,
        relays=network.relay_records(),
        applications=applications,
        events=dict(sorted(events.items())),
        workload_failures=list(network.workload_failures),
        delivered_keys=len(network.delivered_keys),
        delivered_key_digest=key_digest(network.delivered_keys),
        event_log_entries=len(network.event_log),
        event_log_digest=network.event_log.digest(),
    )
