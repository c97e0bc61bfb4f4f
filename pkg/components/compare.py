"""
Compare command for the stretched-cluster simulator.
Runs policy variants of one scenario and prints the comparison table as CSV.
"""
import logging
import sys
from pathlib import Path

from components.validate import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, print_diagnostics
from utils.data_aggregation import compare_variants
from utils.database import get_store
from utils.errors import ScenarioError, SimulationError
from utils.scenario import load_scenario

logger = logging.getLogger(__name__)


def render_compare(path, variants=None, out_dir=None, seed=None, stream=None):
    """
    Compare policy variants on the identical trace and faults.

    Args:
        path (str): Scenario JSON file
        variants (list): Variant names; the scenario's own list if omitted
        out_dir (str): Directory for comparison.csv and per-variant reports
        seed (int): Workload seed override
        stream: Where to print the table; defaults to stdout

    Returns:
        int: exit code
    """
    stream = stream or sys.stdout
    try:
        scenario = load_scenario(path, seed)
        table = compare_variants(scenario, variants, out_dir, store=get_store())
        if out_dir is not None:
            table.to_csv(Path(out_dir) / "comparison.csv", index=False)
    except ScenarioError as e:
        print_diagnostics(e, sys.stderr)
        return EXIT_INVALID
    except (SimulationError, OSError) as e:
        print(f"compare failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    stream.write(table.to_csv(index=False))
    return EXIT_OK
