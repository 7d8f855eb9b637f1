"""Batch runs: scenario in, metrics report out."""

import time
from pathlib import Path
from typing import Optional, Union

from .metrics import MetricsReport, collect_metrics
from .network import QKDNetwork
from .scenario import Scenario
from ..utils.logging_config import log_performance, log_step


def run(
    scenario: Scenario,
    duration_s: Optional[float] = None,
    seed: Optional[int] = None,
    event_log_path: Optional[Union[str, Path]] = None
) -> MetricsReport:
    """Set up the scenario, advance simulated time and collect metrics.

    A zero duration performs no setup and yields an empty report. With
    event_log_path the run's event log is written there as JSON lines.
    """
    updates = {}
    if duration_s is not None:
        updates["duration_s"] = duration_s
    if seed is not None:
        updates["seed"] = seed
    if updates:
        scenario = scenario.model_copy(update=updates)

    if scenario.duration_s <= 0:
        log_step("complete", message="empty run", scenario=scenario.name)
        return MetricsReport(scenario=scenario.name, seed=scenario.seed, duration_s=0.0)

    started = time.perf_counter()
    log_step("start", message="run", scenario=scenario.name, seed=scenario.seed,
             duration_s=scenario.duration_s)
    network = QKDNetwork.from_scenario(scenario)
    network.advance(scenario.duration_s)
    report = collect_metrics(network, scenario.name, scenario.duration_s)
    if event_log_path is not None:
        network.event_log.export(event_log_path)
        log_step("metrics", action="event log written", path=str(event_log_path), entries=len(network.event_log))

    log_performance("run", time.perf_counter() - started, scenario=scenario.name,
                    events=sum(network.events.counts.values()))
    log_step("complete", message="run", scenario=scenario.name, relays=len(report.relays),
             delivered_keys=report.delivered_keys, failures=len(report.workload_failures))
    return report
