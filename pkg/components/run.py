"""
Run command for the stretched-cluster simulator.
Simulates one scenario and writes its report files.
"""
import logging
import sys

from components.validate import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, print_diagnostics
from models.entities import RunManifest
from utils.database import get_store
from utils.engine import new_segment_cache, run
from utils.errors import ScenarioError, SimulationError
from utils.reports import write_run_outputs
from utils.scenario import load_scenario

logger = logging.getLogger(__name__)


def render_run(manifest: RunManifest, stream=None):
    """
    Run a scenario and write its reports to the manifest's output directory.

    Returns:
        int: exit code (0 ok, 1 invalid scenario, 2 runtime failure)
    """
    stream = stream or sys.stdout
    try:
        scenario = load_scenario(manifest.scenario_path, manifest.seed,
                                 manifest.policy_overrides)
        state, report = run(scenario)
        cache = new_segment_cache(scenario, get_store())
        write_run_outputs(scenario, state, report, manifest.output_dir, cache)
    except ScenarioError as e:
        print_diagnostics(e, sys.stderr)
        return EXIT_INVALID
    except (SimulationError, OSError) as e:
        print(f"run failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"{scenario.name}: GPU utilization {report.gpu_utilization:.6f}, "
          f"{report.gpu_hours:.4f} GPU-hours, {report.preemptions} preemptions, "
          f"{report.counts['pending']} pending", file=stream)
    print(f"reports written to {manifest.output_dir}", file=stream)
    return EXIT_OK
