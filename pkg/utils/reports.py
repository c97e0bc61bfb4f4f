"""
Report writers for simulator runs.
Every file is a pure function of the scenario and seed: no timestamps,
host names or other run-environment details are written.
"""
import json
import logging
from pathlib import Path

import pandas as pd

from models.entities import Priority, Resource
from utils.accounting import periodic_rollup, priority_rollup
from utils.cluster import capacity_by_location
from utils.storage import export_placements

logger = logging.getLogger(__name__)

RUN_FILES = (
    "utilization.csv",
    "pending.csv",
    "availability.csv",
    "namespace_usage.csv",
    "usage_by_period.csv",
    "ledger.csv",
    "placements.csv",
    "final_state.json",
    "summary.txt",
)


def _series_frame(series, column):
    return pd.DataFrame(series, columns=["time", column])


def final_state(scenario, state, report):
    """Structured end-of-run state: counts, totals and per-node allocations."""
    nodes = {}
    for node_id, alloc in state.cluster.allocations.items():
        nodes[node_id] = {
            "location": state.cluster.nodes[node_id].location,
            "cpu": alloc.cpu,
            "mem": alloc.mem,
            "gpus": dict(sorted(alloc.gpus.items())),
            "pods": sorted(alloc.pods),
        }
    return {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "horizon": scenario.horizon,
        "policy": report.policy,
        "counts": report.counts,
        "failed_pods": sorted(state.failed),
        "preemptions": report.preemptions,
        "interruptions": report.interruptions,
        "re_replications": report.replicas_added,
        "gpu_seconds": report.gpu_seconds,
        "locations": {loc.id: loc.status.value for loc in state.cluster.locations.values()},
        "nodes": nodes,
    }


def render_summary(scenario, state, report):
    """
    One-page plain-text summary of a run.

    Returns:
        str: summary text, newline terminated
    """
    window = (0, scenario.horizon)
    split = priority_rollup(state.ledger, window)
    opportunistic = split[split["priority"] == Priority.OPPORTUNISTIC.value]
    lines = [
        f"Scenario: {scenario.name}",
        f"Seed: {scenario.seed}",
        f"Horizon: {scenario.horizon} s",
        "Policy: " + ", ".join(f"{k}={v}" for k, v in report.policy.items()),
        "",
        f"GPU utilization: {report.gpu_utilization:.6f}",
        f"CPU utilization: {report.cpu_utilization:.6f}",
        f"GPU-hours served: {report.gpu_hours:.4f}",
        f"CPU core-hours served: {report.cpu_hours:.4f}",
        f"Opportunistic GPU-hours: {opportunistic['gpu_hours'].sum():.4f}",
        f"Opportunistic CPU core-hours: {opportunistic['cpu_hours'].sum():.4f}",
        "",
        "Pods: " + ", ".join(f"{k} {v}" for k, v in report.counts.items()),
        f"Preemptions: {report.preemptions}",
        f"Outage interruptions: {report.interruptions}",
        f"Availability incidents: {report.availability_incidents}",
        f"Max unavailable objects: {report.max_unavailable_objects}",
        f"Replicas added by re-replication: {report.replicas_added}",
        "",
        "GPU-hours by namespace:",
    ]
    for row in report.namespace_usage.itertuples(index=False):
        lines.append(f"  {row.namespace:<24} {row.gpu_hours:>12.4f}")
    lines += ["", "Sites:"]
    for site in capacity_by_location(state.cluster):
        lines.append(f"  {site['location']:<16} {site['region']:<12} {site['status']:<5} "
                     f"nodes={site['nodes']} gpus={site['gpus']}")
    return "\n".join(lines) + "\n"


def write_run_outputs(scenario, state, report, out_dir, cache):
    """
    Write every run output file into out_dir.

    Args:
        scenario (Scenario): The scenario that was run
        state (SimState): Final engine state
        report (RunReport): Metrics of the run
        out_dir (str | Path): Output directory, created if missing
        cache (SegmentCache): Cache serving the periodic rollup

    Returns:
        list: Paths written
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    window = (0, scenario.horizon)

    _series_frame(report.utilization_series, "utilization").to_csv(out / "utilization.csv", index=False)
    _series_frame(report.pending_series, "pending").to_csv(out / "pending.csv", index=False)
    _series_frame(report.availability_series, "unavailable_objects").to_csv(
        out / "availability.csv", index=False)
    report.namespace_usage.to_csv(out / "namespace_usage.csv", index=False)
    periodic_rollup(state.ledger, cache, window, scenario.report_period, Resource.GPU).to_csv(
        out / "usage_by_period.csv", index=False)
    state.ledger.export(out / "ledger.csv")
    export_placements(state.objects, state.placements, out / "placements.csv")
    with open(out / "final_state.json", "w") as f:
        f.write(json.dumps(final_state(scenario, state, report), sort_keys=True, indent=2) + "\n")
    (out / "summary.txt").write_text(render_summary(scenario, state, report))

    logger.info("Wrote %d report files to %s", len(RUN_FILES), out)
    return [out / name for name in RUN_FILES]
