"""
Data aggregation module for the stretched-cluster simulator.
Runs policy variants of one scenario side by side and collects their
metrics into a comparison table.
"""
import copy
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd

from utils.config import worker_count
from utils.engine import new_segment_cache, run
from utils.errors import ScenarioError
from utils.reports import write_run_outputs
from utils.scenario import parse_variant

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ["variant", "utilization", "gpu_hours", "pending", "preemptions"]


def resolve_variants(scenario, variants=None):
    """
    Turn variant names into policies, failing before anything runs.

    Args:
        scenario (Scenario): Base scenario; its halflife carries over
        variants (list): Variant names; defaults to the scenario's own list

    Returns:
        list: (name, PolicyConfig) pairs in the given order

    Raises:
        ScenarioError: fewer than two variants, or an unknown flag
    """
    names = list(variants) if variants else list(scenario.variants)
    if len(names) < 2:
        raise ScenarioError.single("too-few-variants",
                                   f"compare needs at least two variants, got {len(names)}")
    return [(name, parse_variant(name, scenario.policy)) for name in names]


def run_variant(scenario, name, policy, out_dir=None, store=None):
    """
    Run one variant on a private copy of the scenario.

    Every variant sees the identical trace, faults and storage objects;
    only the policy differs.

    Returns:
        dict: comparison row
    """
    variant = copy.deepcopy(scenario).with_policy(policy)
    logger.info("Variant %s started", name)
    state, report = run(variant)
    if out_dir is not None:
        write_run_outputs(variant, state, report, out_dir, new_segment_cache(variant, store))
    logger.info("Variant %s finished: utilization %.4f", name, report.gpu_utilization)
    return report.row(name)


def compare_variants(scenario, variants=None, out_dir=None, workers=None, store=None):
    """
    Run every variant and tabulate the results.

    Variants run concurrently; each writes into its own subdirectory of
    out_dir (indexed, so duplicate names do not collide).

    Args:
        scenario (Scenario): Validated base scenario
        variants (list): Variant names; defaults to the scenario's list
        out_dir (str | Path): Parent directory for per-variant reports
        workers (int): Thread count; defaults to STRETCHSIM_WORKERS
        store (SegmentStore): Optional segment cache store

    Returns:
        pd.DataFrame: one row per variant, in the given order
    """
    resolved = resolve_variants(scenario, variants)
    workers = workers or worker_count()
    with ThreadPoolExecutor(max_workers=min(workers, len(resolved))) as executor:
        futures = []
        for i, (name, policy) in enumerate(resolved):
            target = None
            if out_dir is not None:
                target = Path(out_dir) / f"{i:02d}-{name.replace('+', '_')}"
            futures.append(executor.submit(run_variant, scenario, name, policy, target, store))
        rows = [future.result() for future in futures]
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
