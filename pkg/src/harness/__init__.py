"""Discrete-event simulation runtime, scenarios and metrics."""

from .eventlog import EventLog, LoggedEvent
from .scheduler import EventScheduler
from .scenario import (
    ClassicalChannelSpec,
    InterfaceSpec,
    NodeSpec,
    PhysicalLinkSpec,
    Scenario,
    WorkloadItem,
    check_scenario,
    load_scenario,
    load_scenario_file,
    madrid_scenario,
)
from .network import QKDNetwork
from .metrics import LinkMetrics, MetricsReport, collect_metrics, key_digest
from .runner import run

__all__ = [
    "EventLog",
    "LoggedEvent",
    "EventScheduler",
    "ClassicalChannelSpec",
    "InterfaceSpec",
    "NodeSpec",
    "PhysicalLinkSpec",
    "Scenario",
    "WorkloadItem",
    "check_scenario",
    "load_scenario",
    "load_scenario_file",
    "madrid_scenario",
    "QKDNetwork",
    "LinkMetrics",
    "MetricsReport",
    "collect_metrics",
    "key_digest",
    "run",
]
